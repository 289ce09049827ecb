"""Metric embedding head trained with mined triplets.

Identity-branch features from different wearers are already separable,
but authentication needs distances that compare across people who were
never in the training set.  A single linear map followed by unit
normalization is trained so that cosine distance between windows of the
same wearer is small and between different wearers is large by at least
a margin.  Keeping the head to one layer means the geometry generalizes
instead of memorizing training identities.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tensor
from .ckptio import write_archive, read_archive
from .optim import Adam

__all__ = [
    "SiameseConfig",
    "SiameseParams",
    "init_siamese",
    "embed",
    "cosine_distance",
    "triplet_loss",
    "mine_triplets",
    "train_siamese",
    "save_siamese",
    "load_siamese",
]

_NORM_FLOOR = 1e-8


@dataclass
class SiameseConfig:
    in_dim: int = 64
    emb_dim: int = 32
    margin: float = 0.2
    epochs: int = 80
    lr: float = 5e-4
    batch_triplets: int = 256
    max_triplets_per_epoch: int = 2048

    def __post_init__(self):
        if self.margin < 0.0:
            raise ValueError("margin must be non-negative")
        if self.margin == 0.0:
            warnings.warn("margin 0 accepts already-satisfied triplets as "
                          "violations of nothing; training will be a no-op",
                          stacklevel=2)
        if self.emb_dim < 2:
            raise ValueError("embedding needs at least 2 dimensions")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SiameseParams:
    w: Tensor
    b: Tensor


def init_siamese(cfg: SiameseConfig, seed: int = 0) -> SiameseParams:
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(cfg.in_dim)
    return SiameseParams(
        w=Tensor(rng.uniform(-bound, bound, size=(cfg.in_dim, cfg.emb_dim)),
                 requires_grad=True),
        b=Tensor(np.zeros(cfg.emb_dim), requires_grad=True),
    )


def _embed_t(params: SiameseParams, x: Tensor) -> Tensor:
    """Differentiable embedding: linear map, then rows scaled to unit norm."""
    h = x @ params.w + params.b
    nsq = (h * h).sum(axis=-1, keepdims=True)
    if nsq.data.min() < _NORM_FLOOR ** 2:
        raise ValueError("degenerate embedding: a feature row maps to the "
                         "zero vector, unit normalization is undefined")
    return h * nsq.pow(-0.5)


def embed(params: SiameseParams, features: np.ndarray) -> np.ndarray:
    """Unit-norm embeddings for one feature vector or a stack of them."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    out = _embed_t(params, Tensor(np.atleast_2d(x))).data
    return out[0].copy() if single else out.copy()


def cosine_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray | float:
    """1 - cosine similarity, in [0, 2]; rowwise for matching stacks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    if np.any(na < _NORM_FLOOR) or np.any(nb < _NORM_FLOOR):
        raise ValueError("cosine distance undefined for a zero vector")
    cos = (a * b).sum(axis=-1) / (na * nb)
    d = 1.0 - np.clip(cos, -1.0, 1.0)
    return float(d) if d.ndim == 0 else d


def triplet_loss(params: SiameseParams, anchors: np.ndarray,
                 positives: np.ndarray, negatives: np.ndarray,
                 margin: float = 0.2) -> Tensor:
    """Mean hinge over triplets: [d(a,p) - d(a,n) + margin]_+ .

    Distances are cosine distances between the unit embeddings, so each
    term is bounded by 2 + margin and the loss is zero exactly when
    every triplet is separated by at least the margin.
    """
    ha = _embed_t(params, Tensor(np.atleast_2d(anchors)))
    hp = _embed_t(params, Tensor(np.atleast_2d(positives)))
    hn = _embed_t(params, Tensor(np.atleast_2d(negatives)))
    # unit rows: cos_d = 1 - dot
    d_ap = 1.0 - (ha * hp).sum(axis=-1)
    d_an = 1.0 - (ha * hn).sum(axis=-1)
    return (d_ap - d_an + float(margin)).relu().mean()


def mine_triplets(features: np.ndarray, labels: np.ndarray,
                  params: SiameseParams, margin: float = 0.2) -> np.ndarray:
    """Indices (anchor, positive, hardest negative) of margin violations.

    For every ordered same-label pair the closest other-label sample is
    taken as the negative; the triplet is kept only when
    d(a,n) - d(a,p) < margin holds strictly, so exactly-at-margin
    triplets are excluded and a fully separated embedding yields an
    empty set.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    emb = embed(params, features)
    d = 1.0 - emb @ emb.T  # unit rows: cosine distance matrix
    n = len(labels)
    triplets = []
    for a in range(n):
        same = labels == labels[a]
        diff_idx = np.where(~same)[0]
        if diff_idx.size == 0:
            continue
        hardest = diff_idx[np.argmin(d[a, diff_idx])]
        d_an = d[a, hardest]
        for p in np.where(same)[0]:
            if p == a:
                continue
            if d_an - d[a, p] < margin:
                triplets.append((a, p, hardest))
    return np.asarray(triplets, dtype=int).reshape(-1, 3)


def train_siamese(features: np.ndarray, labels: np.ndarray,
                  cfg: SiameseConfig | None = None, seed: int = 0,
                  log_path=None) -> tuple[SiameseParams, list]:
    """Adam over re-mined violating triplets; deterministic under seed.

    Each epoch mines against the current embedding, subsamples to at
    most ``cfg.max_triplets_per_epoch``, and steps through them in
    minibatches.  An epoch with no violations performs no updates but
    still appears in the history.
    """
    cfg = cfg or SiameseConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[1] != cfg.in_dim:
        raise ValueError(f"features must be (n, {cfg.in_dim})")
    rng = np.random.default_rng(seed)
    params = init_siamese(cfg, seed=int(rng.integers(2 ** 31)))
    opt = Adam({"w": params.w, "b": params.b}, lr=cfg.lr)
    history = []
    for epoch in range(cfg.epochs):
        trips = mine_triplets(features, labels, params, margin=cfg.margin)
        if len(trips) > cfg.max_triplets_per_epoch:
            keep = rng.choice(len(trips), cfg.max_triplets_per_epoch,
                              replace=False)
            trips = trips[keep]
        epoch_loss = 0.0
        for start in range(0, len(trips), cfg.batch_triplets):
            batch = trips[start:start + cfg.batch_triplets]
            loss = triplet_loss(params, features[batch[:, 0]],
                                features[batch[:, 1]], features[batch[:, 2]],
                                margin=cfg.margin)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.data) * len(batch)
        mean_loss = epoch_loss / len(trips) if len(trips) else 0.0
        history.append({"epoch": epoch, "n_triplets": int(len(trips)),
                        "loss": mean_loss})
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "n_triplets", "loss"])
            writer.writeheader()
            writer.writerows(history)
    return params, history


def save_siamese(base, params: SiameseParams, cfg: SiameseConfig) -> None:
    write_archive(base, {"w": params.w.data, "b": params.b.data},
                  cfg.to_dict(), kind="siamese")


def load_siamese(base) -> tuple[SiameseParams, SiameseConfig]:
    arrays, meta = read_archive(base, expected_kind="siamese")
    cfg = SiameseConfig(**meta["hyperparameters"])
    return SiameseParams(w=Tensor(arrays["w"], requires_grad=True),
                         b=Tensor(arrays["b"], requires_grad=True)), cfg
