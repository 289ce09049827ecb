"""Disentangled identity features from heartbeat windows.

A fixed-length window is split into non-overlapping patches, passed
through a single self-attention block, pooled, and projected to an
embedding that is cut in half: one half feeds an identity branch, the
other a nuisance branch.  Each branch refines its half with a small
dilated causal convolution stack and ends in a subject classifier.

Training pulls the halves apart with four terms:

* identity cross-entropy, so the first half predicts the wearer;
* adversarial cross-entropy through a gradient-reversal node, so the
  second half is scrubbed of wearer information while its classifier
  honestly tries to recover it;
* an orthogonality penalty on the squared cosine between the two
  branch features;
* a reconstruction term, so the pair of halves jointly retains enough
  signal content to rebuild the input window.

Everything runs on the in-package autodiff engine in float64.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .autodiff import Tensor, concat, grad_reversal
from .ckptio import write_archive, read_archive
from .optim import Adam, halved_lr

__all__ = [
    "LossWeights",
    "HidnetConfig",
    "EncoderParams",
    "BranchParams",
    "DecoderParams",
    "ModelParams",
    "TrainingDiverged",
    "init_params",
    "standardize_window",
    "patchify",
    "layer_norm",
    "encode",
    "branch_forward",
    "cross_entropy",
    "ortho_reg",
    "reconstruct",
    "iic_loss",
    "total_loss",
    "model_forward",
    "hidnet_features",
    "predict_labels",
    "train_hidnet",
    "save_checkpoint",
    "load_checkpoint",
]

_NORM_FLOOR = 1e-8


@dataclass
class LossWeights:
    """Multipliers for the auxiliary objectives."""
    adv: float = 1.0
    iic: float = 1.0
    ortho: float = 1.0
    rho: float = 1.0


@dataclass
class HidnetConfig:
    n_subjects: int
    seg_len: int = 400
    patch_len: int = 20
    d_model: int = 64
    n_heads: int = 4
    d_embed: int = 128
    tcn_channels: int = 64
    tcn_kernel: int = 3
    tcn_dilations: tuple = (1, 2, 4)
    decoder_hidden: int = 256
    epochs: int = 100
    lr: float = 1e-4
    lr_halve_every: int = 20
    grl_ramp_epochs: int = 10
    batch_size: int = 8
    clip_norm: float | None = 5.0
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.n_subjects < 2:
            raise ValueError("need at least two subjects to classify")
        if self.seg_len < self.patch_len:
            raise ValueError("seg_len shorter than patch_len")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must divide evenly into heads")
        if self.d_embed % 2 != 0:
            raise ValueError("d_embed must be even to split in half")
        self.tcn_dilations = tuple(int(d) for d in self.tcn_dilations)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tcn_dilations"] = list(self.tcn_dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HidnetConfig":
        d = dict(d)
        d["weights"] = LossWeights(**d.get("weights", {}))
        d["tcn_dilations"] = tuple(d.get("tcn_dilations", (1, 2, 4)))
        return cls(**d)


@dataclass
class EncoderParams:
    w_patch: Tensor
    b_patch: Tensor
    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor
    ln_gamma: Tensor
    ln_beta: Tensor
    w_embed: Tensor
    b_embed: Tensor


@dataclass
class BranchParams:
    conv_w: list  # one (out_ch, in_ch, kernel) tensor per layer
    conv_b: list
    w_cls: Tensor
    b_cls: Tensor


@dataclass
class DecoderParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class ModelParams:
    encoder: EncoderParams
    id_branch: BranchParams
    nid_branch: BranchParams
    decoder: DecoderParams

    def as_dict(self) -> dict:
        """Flat name -> Tensor view used by the optimizer and checkpoints."""
        out = {}
        for name in ("w_patch", "b_patch", "w_q", "b_q", "w_k", "b_k",
                     "w_v", "b_v", "w_o", "b_o", "ln_gamma", "ln_beta",
                     "w_embed", "b_embed"):
            out[f"encoder.{name}"] = getattr(self.encoder, name)
        for tag, branch in (("id", self.id_branch), ("nid", self.nid_branch)):
            for i, (w, b) in enumerate(zip(branch.conv_w, branch.conv_b)):
                out[f"{tag}.conv{i}.w"] = w
                out[f"{tag}.conv{i}.b"] = b
            out[f"{tag}.w_cls"] = branch.w_cls
            out[f"{tag}.b_cls"] = branch.b_cls
        for name in ("w1", "b1", "w2", "b2"):
            out[f"decoder.{name}"] = getattr(self.decoder, name)
        return out

    def copy(self) -> "ModelParams":
        flat = {k: Tensor(v.data.copy(), requires_grad=True)
                for k, v in self.as_dict().items()}
        return _params_from_flat(flat)


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries the last good state."""

    def __init__(self, epoch: int, last_good: ModelParams):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch
        self.last_good = last_good


def _uniform(rng, fan_in: int, shape) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _init_branch(rng, cfg: HidnetConfig) -> BranchParams:
    conv_w, conv_b = [], []
    in_ch = 1
    for _ in cfg.tcn_dilations:
        conv_w.append(_uniform(rng, in_ch * cfg.tcn_kernel,
                               (cfg.tcn_channels, in_ch, cfg.tcn_kernel)))
        conv_b.append(_zeros(cfg.tcn_channels))
        in_ch = cfg.tcn_channels
    return BranchParams(
        conv_w=conv_w,
        conv_b=conv_b,
        w_cls=_uniform(rng, cfg.tcn_channels, (cfg.tcn_channels, cfg.n_subjects)),
        b_cls=_zeros(cfg.n_subjects),
    )


def init_params(cfg: HidnetConfig, seed: int = 0) -> ModelParams:
    """Fan-in-scaled uniform weights, zero biases, unit layer-norm gain."""
    rng = np.random.default_rng(seed)
    d, de = cfg.d_model, cfg.d_embed
    enc = EncoderParams(
        w_patch=_uniform(rng, cfg.patch_len, (cfg.patch_len, d)),
        b_patch=_zeros(d),
        w_q=_uniform(rng, d, (d, d)), b_q=_zeros(d),
        w_k=_uniform(rng, d, (d, d)), b_k=_zeros(d),
        w_v=_uniform(rng, d, (d, d)), b_v=_zeros(d),
        w_o=_uniform(rng, d, (d, d)), b_o=_zeros(d),
        ln_gamma=Tensor(np.ones(d), requires_grad=True),
        ln_beta=_zeros(d),
        w_embed=_uniform(rng, d, (d, de)),
        b_embed=_zeros(de),
    )
    id_branch = _init_branch(rng, cfg)
    nid_branch = _init_branch(rng, cfg)
    dec = DecoderParams(
        w1=_uniform(rng, de, (de, cfg.decoder_hidden)),
        b1=_zeros(cfg.decoder_hidden),
        w2=_uniform(rng, cfg.decoder_hidden, (cfg.decoder_hidden, cfg.seg_len)),
        b2=_zeros(cfg.seg_len),
    )
    return ModelParams(enc, id_branch, nid_branch, dec)


def _params_from_flat(flat: dict) -> ModelParams:
    enc = EncoderParams(**{name: flat[f"encoder.{name}"] for name in (
        "w_patch", "b_patch", "w_q", "b_q", "w_k", "b_k", "w_v", "b_v",
        "w_o", "b_o", "ln_gamma", "ln_beta", "w_embed", "b_embed")})
    branches = {}
    for tag in ("id", "nid"):
        conv_w, conv_b = [], []
        i = 0
        while f"{tag}.conv{i}.w" in flat:
            conv_w.append(flat[f"{tag}.conv{i}.w"])
            conv_b.append(flat[f"{tag}.conv{i}.b"])
            i += 1
        branches[tag] = BranchParams(conv_w, conv_b,
                                     flat[f"{tag}.w_cls"], flat[f"{tag}.b_cls"])
    dec = DecoderParams(flat["decoder.w1"], flat["decoder.b1"],
                        flat["decoder.w2"], flat["decoder.b2"])
    return ModelParams(enc, branches["id"], branches["nid"], dec)


# ---------------------------------------------------------------------------
# forward pieces


def standardize_window(x: np.ndarray) -> np.ndarray:
    """Zero-mean unit-energy copy of a window (squared L2 norm 1).

    Unit energy rather than unit variance keeps the reconstruction
    error on the same footing as the classification terms, so no single
    objective swamps the shared encoder.  The std is floored so a flat
    window maps to zeros instead of dividing by nothing.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, keepdims=True)
    sd = np.where(sd < _NORM_FLOOR, 1.0, sd)
    return (x - mu) / (sd * np.sqrt(x.shape[-1]))


def patchify(x, patch_len: int) -> Tensor:
    """(B, T) -> (B, N, patch_len) with any trailing remainder dropped."""
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.ndim != 2:
        raise ValueError("patchify expects a (batch, samples) array")
    b, total = t.shape
    if total < patch_len:
        raise ValueError(
            f"window of {total} samples is shorter than one {patch_len}-sample patch")
    n = total // patch_len
    if total != n * patch_len:
        t = t[:, :n * patch_len]
    return t.reshape(b, n, patch_len)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * (var + eps).pow(-0.5) * gamma + beta


def encode(x, enc: EncoderParams, cfg: HidnetConfig):
    """Window batch -> (full embedding, identity half, nuisance half).

    Windows arrive unit-energy (see ``standardize_window``), so sample
    values sit near 1/sqrt(T).  The patch values are rescaled to unit
    variance before embedding; without this the attention logits start
    four orders of magnitude too small and the block stays frozen at
    uniform weights.  The reconstruction target keeps the native
    unit-energy scale.
    """
    t = x if isinstance(x, Tensor) else Tensor(x)
    patches = patchify(t * math.sqrt(t.shape[-1]), cfg.patch_len)
    z = patches @ enc.w_patch + enc.b_patch          # (B, N, d)
    b, n, d = z.shape
    dh = d // cfg.n_heads

    def heads(t: Tensor) -> Tensor:
        return t.reshape(b, n, cfg.n_heads, dh).swapaxes(1, 2)

    q = heads(z @ enc.w_q + enc.b_q)
    k = heads(z @ enc.w_k + enc.b_k)
    v = heads(z @ enc.w_v + enc.b_v)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
    attn = scores.softmax(axis=-1)
    ctx = (attn @ v).swapaxes(1, 2).reshape(b, n, d)
    z = layer_norm(z + (ctx @ enc.w_o + enc.b_o), enc.ln_gamma, enc.ln_beta)
    pooled = z.mean(axis=1)                          # (B, d)
    e = pooled @ enc.w_embed + enc.b_embed           # (B, d_embed)
    half = cfg.d_embed // 2
    return e, e[:, :half], e[:, half:]


def _causal_conv(x: Tensor, w: Tensor, b: Tensor, dilation: int) -> Tensor:
    """Dilated causal convolution on (B, C, L); output (B, O, L).

    The kernel taps are gathered along the channel axis so each layer
    runs as a single large matmul instead of one per tap.
    """
    bsz, cin, length = x.shape
    out_ch, _, kernel = w.shape
    pad = (kernel - 1) * dilation
    if pad:
        x = concat([Tensor(np.zeros((bsz, cin, pad))), x], axis=2)
    taps = [x[:, :, t * dilation:t * dilation + length].swapaxes(1, 2)
            for t in range(kernel)]
    stacked = concat(taps, axis=2).reshape(bsz * length, kernel * cin)
    w_flat = w.swapaxes(0, 2).reshape(kernel * cin, out_ch)
    out = (stacked @ w_flat).reshape(bsz, length, out_ch).swapaxes(1, 2)
    return out + b.reshape(1, -1, 1)


def branch_forward(e_half: Tensor, branch: BranchParams, cfg: HidnetConfig,
                   grl_lambda: float | None = None):
    """Half-embedding -> (branch feature H, classifier logits).

    The half is treated as a single-channel sequence for the dilated
    convolution stack, then mean-pooled over the sequence axis.  When
    ``grl_lambda`` is given, the classifier input passes through the
    gradient-reversal node so upstream parameters receive the negated,
    scaled adversarial gradient while the classifier itself trains
    normally.
    """
    bsz, width = e_half.shape
    s = e_half.reshape(bsz, 1, width)
    last = len(branch.conv_w) - 1
    for i, (w, b, dil) in enumerate(zip(branch.conv_w, branch.conv_b,
                                        cfg.tcn_dilations)):
        s = _causal_conv(s, w, b, dil)
        # bounded final activation: an unbounded branch feature lets the
        # reversed gradient inflate feature norms without limit, which
        # destabilizes the adversarial game
        s = s.tanh() if i == last else s.relu()
    h = s.mean(axis=2)                               # (B, channels)
    cls_in = h if grl_lambda is None else grad_reversal(h, grl_lambda)
    logits = cls_in @ branch.w_cls + branch.b_cls
    return h, logits


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels under the logits."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ValueError("logits must be (batch, classes) with one label per row")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("label outside the class range")
    picked = logits.log_softmax(axis=-1)[np.arange(len(labels)), labels.astype(int)]
    return -(picked.mean())


def ortho_reg(h_id: Tensor, h_nid: Tensor, rho: float = 1.0) -> Tensor:
    """Mean squared cosine between paired branch features, scaled by rho.

    Rows where either feature norm falls below 1e-8 contribute zero, so
    a collapsed branch cannot emit infinities through the division.
    """
    norm_i = np.linalg.norm(h_id.data, axis=-1)
    norm_n = np.linalg.norm(h_nid.data, axis=-1)
    valid = np.where((norm_i >= _NORM_FLOOR) & (norm_n >= _NORM_FLOOR))[0]
    batch = h_id.shape[0]
    if valid.size == 0:
        return Tensor(0.0)
    hi = h_id[valid]
    hn = h_nid[valid]
    dot = (hi * hn).sum(axis=-1)
    denom = ((hi * hi).sum(axis=-1) * (hn * hn).sum(axis=-1)).pow(-0.5)
    cos = dot * denom
    return (cos * cos).sum() * (float(rho) / batch)


def reconstruct(h_id: Tensor, h_nid: Tensor, dec: DecoderParams) -> Tensor:
    """Decode the concatenated branch features back into a window."""
    z = concat([h_id, h_nid], axis=1)
    hidden = (z @ dec.w1 + dec.b1).relu()
    return hidden @ dec.w2 + dec.b2


def iic_loss(x, x_hat: Tensor) -> Tensor:
    """Mean per-window squared reconstruction error."""
    target = x if isinstance(x, Tensor) else Tensor(x)
    diff = x_hat - target
    return (diff * diff).sum(axis=-1).mean()


def model_forward(params: ModelParams, cfg: HidnetConfig, x: np.ndarray,
                  grl_lambda: float = 0.0) -> dict:
    """All intermediate tensors for one batch of standardized windows."""
    e, e_id, e_nid = encode(x, params.encoder, cfg)
    h_id, logits_id = branch_forward(e_id, params.id_branch, cfg)
    h_nid, logits_adv = branch_forward(e_nid, params.nid_branch, cfg,
                                       grl_lambda=grl_lambda)
    x_hat = reconstruct(h_id, h_nid, params.decoder)
    return {
        "e": e, "e_id": e_id, "e_nid": e_nid,
        "h_id": h_id, "h_nid": h_nid,
        "logits_id": logits_id, "logits_adv": logits_adv,
        "x_hat": x_hat,
    }


def total_loss(params: ModelParams, cfg: HidnetConfig, x: np.ndarray,
               y: np.ndarray, grl_lambda: float = 0.0):
    """Combined objective and its named components, batch-averaged."""
    fwd = model_forward(params, cfg, x, grl_lambda=grl_lambda)
    w = cfg.weights
    loss_id = cross_entropy(fwd["logits_id"], y)
    loss_adv = cross_entropy(fwd["logits_adv"], y)
    reg = ortho_reg(fwd["h_id"], fwd["h_nid"], rho=w.rho)
    rec = iic_loss(x, fwd["x_hat"])
    total = loss_id + w.adv * loss_adv + w.iic * rec + w.ortho * reg
    parts = {
        "loss_id": float(loss_id.data),
        "loss_adv": float(loss_adv.data),
        "loss_iic": float(rec.data),
        "reg_ortho": float(reg.data),
    }
    return total, parts


def hidnet_features(params: ModelParams, cfg: HidnetConfig,
                    windows: np.ndarray) -> np.ndarray:
    """Identity-branch features for raw windows (standardized inside)."""
    x = standardize_window(np.atleast_2d(np.asarray(windows, dtype=np.float64)))
    _, e_id, _ = encode(x, params.encoder, cfg)
    h_id, _ = branch_forward(e_id, params.id_branch, cfg)
    return h_id.data.copy()


def predict_labels(params: ModelParams, cfg: HidnetConfig,
                   x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax labels from the identity and nuisance classifiers."""
    fwd = model_forward(params, cfg, x)
    return (fwd["logits_id"].data.argmax(axis=1),
            fwd["logits_adv"].data.argmax(axis=1))


# ---------------------------------------------------------------------------
# training


def _clip_global_norm(params: dict, max_norm: float) -> None:
    """Rescale all gradients when their joint norm exceeds ``max_norm``.

    The adversarial game can produce brief gradient bursts when the
    reversed branch and its classifier chase each other; clipping keeps
    one burst from undoing the shared encoder's progress.
    """
    sq = 0.0
    for p in params.values():
        if p.grad is not None:
            sq += float((p.grad * p.grad).sum())
    norm = math.sqrt(sq)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale


def train_hidnet(x: np.ndarray, y: np.ndarray, cfg: HidnetConfig,
                 seed: int = 0, log_path=None):
    """Train on standardized windows ``x`` with subject labels ``y``.

    Runs ``cfg.epochs`` epochs of Adam with the halved-rate schedule;
    the reversal strength ramps linearly from 0 to 1 over the first
    ``cfg.grl_ramp_epochs`` epochs.  Deterministic for a fixed seed.
    A non-finite loss raises ``TrainingDiverged`` carrying the last
    completed epoch's parameters.

    Returns ``(params, history)`` where history has one dict per epoch;
    when ``log_path`` is given the same rows are written as CSV.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if x.ndim != 2 or x.shape[1] < cfg.patch_len:
        raise ValueError("training windows must be (batch, seg_len)")
    if len(x) != len(y):
        raise ValueError("one label per window required")
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed=int(rng.integers(2 ** 31)))
    opt = Adam(params.as_dict(), lr=cfg.lr)
    last_good = params.copy()
    history = []
    n = len(x)
    fields = ["epoch", "lr", "grl_lambda", "total",
              "loss_id", "loss_adv", "loss_iic", "reg_ortho"]
    for epoch in range(cfg.epochs):
        opt.lr = halved_lr(cfg.lr, epoch, cfg.lr_halve_every)
        if cfg.grl_ramp_epochs > 0:
            lam = min(1.0, epoch / cfg.grl_ramp_epochs)
        else:
            lam = 1.0
        order = rng.permutation(n)
        sums = dict.fromkeys(fields[3:], 0.0)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            total, parts = total_loss(params, cfg, x[idx], y[idx], grl_lambda=lam)
            if not np.isfinite(total.data):
                raise TrainingDiverged(epoch, last_good)
            opt.zero_grad()
            total.backward()
            if cfg.clip_norm is not None:
                _clip_global_norm(opt.params, cfg.clip_norm)
            opt.step()
            frac = len(idx) / n
            sums["total"] += float(total.data) * frac
            for key, val in parts.items():
                sums[key] += val * frac
        row = {"epoch": epoch, "lr": opt.lr, "grl_lambda": lam, **sums}
        history.append(row)
        last_good = params.copy()
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(history)
    return params, history


# ---------------------------------------------------------------------------
# persistence


def save_checkpoint(base, params: ModelParams, cfg: HidnetConfig) -> None:
    tensors = {name: t.data for name, t in params.as_dict().items()}
    write_archive(base, tensors, cfg.to_dict(), kind="hidnet")


def load_checkpoint(base) -> tuple[ModelParams, HidnetConfig]:
    arrays, meta = read_archive(base, expected_kind="hidnet")
    cfg = HidnetConfig.from_dict(meta["hyperparameters"])
    flat = {name: Tensor(a, requires_grad=True) for name, a in arrays.items()}
    return _params_from_flat(flat), cfg
