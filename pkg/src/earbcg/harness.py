"""Reproducible evaluation: folds, error rates, degradations, reports.

The harness answers "how well does the whole pipeline authenticate
people it has never seen": subjects are split into disjoint folds,
the feature extractor and metric head are trained on the train
subjects only, and every test subject takes a turn as the legitimate
user while the remaining test subjects attack. On top of that sit the
robustness studies (packet loss, lower sampling rates, device
removal) and the variability analytics used to sanity-check the
synthetic cohort against the design bands.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .auth import AuthPipeline, AuthProfile, eer_threshold, far_frr, register_embeddings
from .core import SignalSegment
from .denoise import denoise_inherent
from .disentangle import HidnetConfig, hidnet_features, load_checkpoint, save_checkpoint, train_hidnet
from .motion import MotionConfig, detect_peaks, zscore
from .siamese import SiameseConfig, embed, load_siamese, save_siamese, train_siamese
from .synth import SporadicEventSpec, inject_event

REPORT_SCHEMA_VERSION = 1

DEGRADATION_KINDS = ("packet_loss", "resample", "removal")
SUPPORTED_RATES = (25.0, 50.0, 75.0, 100.0)


class ProtocolViolation(RuntimeError):
    """Raised when train and test subjects overlap in an evaluation."""


@dataclass
class EvalConfig:
    """Protocol knobs for the cross-validated authentication study.

    samples_per_user windows are cut per subject for evaluation and
    split into samples_per_user // registration_samples rotation
    groups: each group takes one turn as the registration set while
    the remaining windows become genuine queries.

    The training knobs control how much data the per-fold feature
    extractor sees: windows are slid over each train subject's
    recording at train_step seconds and thinned to
    train_windows_per_user evenly spaced ones.
    """

    n_folds: int = 3
    segment_len: float = 4.0            # seconds per authentication window
    samples_per_user: int = 240
    registration_samples: int = 80
    seed: int = 0
    grid_points: int = 1000
    train_step: float = 2.0             # seconds between training windows
    train_windows_per_user: int = 120
    train_seed: int = 0
    loss_aug: bool = False              # packet-loss-aware training augmentation
    loss_tiers: tuple = (0.1, 0.2, 0.3)
    # per-fold model construction knobs, e.g. {"epochs": 10}; n_subjects
    # is always set from the fold
    hidnet_overrides: dict = field(default_factory=dict)
    siamese_overrides: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.n_folds < 2:
            raise ValueError(f"n_folds must be >= 2, got {self.n_folds}")
        if self.segment_len <= 0:
            raise ValueError(f"segment_len must be positive, got {self.segment_len}")
        if self.registration_samples < 2:
            raise ValueError("registration needs at least 2 samples")
        if self.samples_per_user % self.registration_samples != 0:
            raise ValueError(
                f"samples_per_user ({self.samples_per_user}) must be a multiple of "
                f"registration_samples ({self.registration_samples})"
            )
        if self.samples_per_user // self.registration_samples < 2:
            raise ValueError("need at least 2 rotation groups so queries remain")
        if self.train_step <= 0 or self.train_windows_per_user < 1:
            raise ValueError("training window knobs must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_tiers"] = list(self.loss_tiers)
        return d


@dataclass
class UserRates:
    """Error rates for one subject acting as the legitimate user."""

    user_id: str
    far_pct: float
    frr_pct: float
    eer_pct: float

    def validate(self) -> None:
        for name in ("far_pct", "frr_pct", "eer_pct"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must be in [0, 100], got {v}")


@dataclass
class MetricsReport:
    """Cross-validation outcome: per-user rates plus cohort means."""

    per_user: list
    mean_far: float
    mean_frr: float
    eer: float
    details: dict = field(default_factory=dict)

    def validate(self) -> None:
        for row in self.per_user:
            row.validate()
        for name in ("mean_far", "mean_frr", "eer"):
            v = getattr(self, name)
            if not (math.isnan(v) or 0.0 <= v <= 100.0):
                raise ValueError(f"{name} must be in [0, 100], got {v}")

    def to_dict(self) -> dict:
        return {
            "per_user": [asdict(r) for r in self.per_user],
            "mean_far_pct": self.mean_far,
            "mean_frr_pct": self.mean_frr,
            "eer_pct": self.eer,
            "details": self.details,
        }


@dataclass
class DegradationSpec:
    """One degraded acquisition condition."""

    kind: str
    loss_rate: float = 0.0
    target_fs: float = 100.0
    removal_window: float = 4.0

    def validate(self) -> None:
        if self.kind not in DEGRADATION_KINDS:
            raise ValueError(f"kind must be one of {DEGRADATION_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.loss_rate <= 0.3:
            raise ValueError(f"loss_rate must be in [0, 0.3], got {self.loss_rate}")
        if self.target_fs not in SUPPORTED_RATES:
            raise ValueError(f"target_fs must be one of {SUPPORTED_RATES}, got {self.target_fs}")
        if self.removal_window <= 0:
            raise ValueError("removal_window must be positive")


# ---------------------------------------------------------------------------
# fold construction


def kfold_subject_split(subjects, n_folds: int, seed: int = 0):
    """Shuffle subjects and deal them into n_folds disjoint test groups.

    Returns a list of (train_ids, test_ids) pairs, one per fold. Test
    groups partition the subject set with sizes differing by at most
    one; every subject is tested exactly once.
    """
    subjects = list(subjects)
    if len(subjects) < n_folds:
        raise ValueError(
            f"cannot split {len(subjects)} subjects into {n_folds} folds"
        )
    if len(set(subjects)) != len(subjects):
        raise ValueError("subject ids must be unique")
    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    base, extra = divmod(len(order), n_folds)
    folds = []
    start = 0
    for k in range(n_folds):
        size = base + (1 if k < extra else 0)
        test = sorted(order[start:start + size])
        train = sorted(s for s in order if s not in test)
        folds.append((train, test))
        start += size
    return folds


def _check_disjoint(train_ids, test_ids) -> None:
    shared = set(train_ids) & set(test_ids)
    if shared:
        raise ProtocolViolation(
            f"subjects {sorted(shared)} appear in both train and test sets"
        )


# ---------------------------------------------------------------------------
# dataset plumbing


def _as_streams(dataset) -> dict:
    """Normalize a dataset to an ordered {subject_id: SignalSegment} map.

    Accepts either that mapping directly or a cohort list of
    (profile, segment) pairs as produced by the generator.
    """
    if isinstance(dataset, dict):
        streams = dict(dataset)
    else:
        streams = {profile.subject_id: seg for profile, seg in dataset}
    if len(streams) < 2:
        raise ValueError("evaluation needs at least 2 subjects")
    rates = {seg.fs for seg in streams.values()}
    if len(rates) != 1:
        raise ValueError(f"all recordings must share one sampling rate, got {sorted(rates)}")
    return streams


def _nonoverlap_windows(x: np.ndarray, win: int, count: int):
    if x.size < win * count:
        raise ValueError(
            f"recording of {x.size} samples cannot supply {count} windows of {win}"
        )
    return x[: win * count].reshape(count, win)


def _training_windows(x: np.ndarray, win: int, step: int, max_windows: int):
    """Overlapping windows at a fixed step, thinned to an even subset."""
    n = (x.size - win) // step + 1
    if n < 1:
        raise ValueError("recording shorter than one training window")
    starts = np.arange(n) * step
    if n > max_windows:
        keep = np.round(np.linspace(0, n - 1, max_windows)).astype(int)
        starts = starts[keep]
    return np.stack([x[s:s + win] for s in starts])


def _augment_packet_loss(windows: np.ndarray, tiers, rng) -> np.ndarray:
    """Mask a random 3/4 of the windows with tiered sample loss.

    One quarter stays clean; each masked window gets a tier drawn
    uniformly and exactly round(rate * n) of its samples zeroed.
    """
    out = windows.copy()
    n = windows.shape[1]
    for i in range(out.shape[0]):
        if rng.random() < 0.25:
            continue
        rate = tiers[rng.integers(len(tiers))]
        k = int(round(rate * n))
        idx = rng.choice(n, size=k, replace=False)
        out[i, idx] = 0.0
    return out


# ---------------------------------------------------------------------------
# cross-validated evaluation


def _fold_models(fold_idx, train_ids, denoised, fs, cfg, ckpt_entry, out_dir):
    """Train (or load) the feature extractor and metric head for one fold."""
    if ckpt_entry is not None:
        hid_params, hid_cfg = load_checkpoint(ckpt_entry["hidnet"])
        sia_params, sia_cfg = load_siamese(ckpt_entry["siamese"])
        return hid_params, hid_cfg, sia_params

    win = int(round(cfg.segment_len * fs))
    step = int(round(cfg.train_step * fs))
    rng = np.random.default_rng(cfg.train_seed + 7919 * fold_idx)
    xs, ys = [], []
    for label, sid in enumerate(train_ids):
        w = _training_windows(denoised[sid], win, step, cfg.train_windows_per_user)
        if cfg.loss_aug:
            w = _augment_packet_loss(w, cfg.loss_tiers, rng)
        xs.append(w)
        ys.append(np.full(w.shape[0], label))
    x = np.concatenate(xs)
    y = np.concatenate(ys)

    hid_cfg = HidnetConfig(n_subjects=len(train_ids), **cfg.hidnet_overrides)
    hid_params, _ = train_hidnet(x, y, hid_cfg, seed=cfg.train_seed + fold_idx)
    feats = hidnet_features(hid_params, hid_cfg, x)
    sia_cfg = SiameseConfig(**cfg.siamese_overrides)
    sia_params, _ = train_siamese(feats, y, sia_cfg, seed=cfg.train_seed + fold_idx)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out_dir / f"fold{fold_idx}_hidnet", hid_params, hid_cfg)
        save_siamese(out_dir / f"fold{fold_idx}_siamese", sia_params, sia_cfg)
    return hid_params, hid_cfg, sia_params


def evaluate(dataset, model_ckpts=None, cfg: EvalConfig | None = None, out_dir=None) -> MetricsReport:
    """Run the subject-independent cross-validation protocol.

    Each fold trains models on its train subjects only, then every
    test subject is enrolled from each rotation group of their
    evaluation windows in turn; the other test subjects' windows act
    as attack queries. FAR/FRR are measured at the enrolled threshold
    and averaged over rotations; per-user EER comes from the pooled
    genuine and attack distances across rotations.

    model_ckpts, when given, maps fold index to {"hidnet": base,
    "siamese": base, "train_subjects": [...]} so pre-trained models
    can be reused; their training subjects must not leak into the
    fold's test group.
    """
    cfg = cfg or EvalConfig()
    cfg.validate()
    streams = _as_streams(dataset)
    subject_ids = sorted(streams)
    fs = streams[subject_ids[0]].fs
    win = int(round(cfg.segment_len * fs))
    n_groups = cfg.samples_per_user // cfg.registration_samples

    folds = kfold_subject_split(subject_ids, cfg.n_folds, cfg.seed)

    # denoising is model independent, so clean each recording once
    denoised = {sid: denoise_inherent(streams[sid]).samples for sid in subject_ids}

    per_user = []
    gaps = []
    fold_info = []
    for fold_idx, (train_ids, test_ids) in enumerate(folds):
        _check_disjoint(train_ids, test_ids)
        entry = None if model_ckpts is None else model_ckpts.get(fold_idx)
        if entry is not None and "train_subjects" in entry:
            _check_disjoint(entry["train_subjects"], test_ids)
        hid_params, hid_cfg, sia_params = _fold_models(
            fold_idx, train_ids, denoised, fs, cfg, entry, out_dir
        )

        emb = {}
        for sid in test_ids:
            windows = _nonoverlap_windows(denoised[sid], win, cfg.samples_per_user)
            emb[sid] = embed(sia_params, hidnet_features(hid_params, hid_cfg, windows))

        for sid in test_ids:
            attackers = [v for v in test_ids if v != sid]
            far_rot, frr_rot = [], []
            pooled_gen, pooled_imp = [], []
            for r in range(n_groups):
                lo, hi = r * cfg.registration_samples, (r + 1) * cfg.registration_samples
                reg = emb[sid][lo:hi]
                gen = np.concatenate([emb[sid][:lo], emb[sid][hi:]])
                imp_reg = np.concatenate([emb[v][lo:hi] for v in attackers])
                attack = np.concatenate(
                    [np.concatenate([emb[v][:lo], emb[v][hi:]]) for v in attackers]
                )
                profile = register_embeddings(reg, imp_reg, grid_points=cfg.grid_points)
                gaps.append(abs(far_frr(profile.d_gen, profile.d_imp, profile.tau)[0]
                                - far_frr(profile.d_gen, profile.d_imp, profile.tau)[1]))
                d_gen = np.linalg.norm(gen - profile.center, axis=1)
                d_att = np.linalg.norm(attack - profile.center, axis=1)
                far_r, frr_r = far_frr(d_gen, d_att, profile.tau)
                far_rot.append(far_r)
                frr_rot.append(frr_r)
                pooled_gen.append(d_gen)
                pooled_imp.append(d_att)
            _, far_e, frr_e = eer_threshold(
                np.concatenate(pooled_gen), np.concatenate(pooled_imp), cfg.grid_points
            )
            row = UserRates(
                user_id=sid,
                far_pct=100.0 * float(np.mean(far_rot)),
                frr_pct=100.0 * float(np.mean(frr_rot)),
                eer_pct=100.0 * 0.5 * (far_e + frr_e),
            )
            row.validate()
            per_user.append(row)
        fold_info.append({"train": list(train_ids), "test": list(test_ids)})

    report = MetricsReport(
        per_user=per_user,
        mean_far=float(np.mean([r.far_pct for r in per_user])),
        mean_frr=float(np.mean([r.frr_pct for r in per_user])),
        eer=float(np.mean([r.eer_pct for r in per_user])),
        details={
            "folds": fold_info,
            "threshold_gaps": [float(g) for g in gaps],
            "threshold_gap_max": float(max(gaps)),
            "gap_bound": 1.0 / cfg.registration_samples
            + 1.0 / (cfg.registration_samples * (len(folds[0][1]) - 1)),
            "config": cfg.to_dict(),
        },
    )
    report.validate()
    return report


# ---------------------------------------------------------------------------
# continuous authentication


def sliding_window_auth(
    stream: SignalSegment,
    profile: AuthProfile,
    pipeline: AuthPipeline,
    window_s: float = 4.0,
    step_s: float = 0.5,
):
    """Authenticate every window of a stream at a fixed step.

    Returns a list of (start_s, accepted, distance) triples, one per
    window position; decision k covers [k*step, k*step + window).
    """
    if stream.fs != pipeline.fs:
        raise ValueError(f"stream fs {stream.fs} != pipeline fs {pipeline.fs}")
    win = int(round(window_s * stream.fs))
    step = int(round(step_s * stream.fs))
    if step < 1:
        raise ValueError("step too small for the sampling rate")
    x = stream.samples
    if x.size < win:
        raise ValueError(f"stream of {x.size} samples is shorter than one {win}-sample window")
    n = (x.size - win) // step + 1
    starts = np.arange(n) * step
    windows = np.stack([x[s:s + win] for s in starts])
    emb = pipeline.embed_windows(windows)
    dist = np.linalg.norm(emb - profile.center, axis=1)
    return [
        (float(s / stream.fs), bool(d < profile.tau), float(d))
        for s, d in zip(starts, dist)
    ]


def first_rejection_latency(decisions, onset_s: float, window_s: float = 4.0):
    """Seconds from an event onset until a decision window rejects.

    A decision counts once its window extends past the onset; the
    latency is measured to the end of the first rejecting window.
    Returns None when every such window accepts.
    """
    for start_s, accepted, _ in decisions:
        end_s = start_s + window_s
        if end_s <= onset_s:
            continue
        if not accepted:
            return end_s - onset_s
    return None


# ---------------------------------------------------------------------------
# degradations


def simulate_packet_loss(seg: SignalSegment, loss_rate: float, seed: int = 0) -> SignalSegment:
    """Zero exactly round(loss_rate * n) uniformly chosen samples."""
    if not 0.0 <= loss_rate < 1.0:
        raise ValueError(f"loss_rate must be in [0, 1), got {loss_rate}")
    x = seg.samples.copy()
    k = int(round(loss_rate * x.size))
    if k > 0:
        idx = np.random.default_rng(seed).choice(x.size, size=k, replace=False)
        x[idx] = 0.0
    return SignalSegment(x, seg.fs, seg.t0)


def resample(seg: SignalSegment, target_fs: float) -> SignalSegment:
    """Lower the sampling rate of a segment.

    Integer rate ratios decimate by stride with no anti-alias filter,
    reproducing what a sensor that simply emits every k-th sample
    would deliver; other rational ratios go through polyphase
    filtering. Raising the rate is refused.
    """
    if target_fs > seg.fs:
        raise ValueError(f"upsampling {seg.fs} -> {target_fs} Hz is not supported")
    if target_fs <= 0:
        raise ValueError("target_fs must be positive")
    if target_fs == seg.fs:
        return seg.copy()
    ratio = Fraction(int(round(target_fs * 1000)), int(round(seg.fs * 1000)))
    if ratio.numerator == 1:
        return SignalSegment(seg.samples[::ratio.denominator].copy(), target_fs, seg.t0)
    # mean padding keeps a constant signal exactly constant
    y = resample_poly(seg.samples, ratio.numerator, ratio.denominator, padtype="mean")
    return SignalSegment(y, target_fs, seg.t0)


def reconstruct_rate(seg: SignalSegment, target_fs: float) -> SignalSegment:
    """Linearly interpolate a stream onto a denser sample grid.

    This is the explicit reconstruction step that feeds degraded
    low-rate captures to the fixed-rate pipeline; the information
    already lost to decimation stays lost.
    """
    if target_fs < seg.fs:
        raise ValueError("reconstruction only raises the rate; use resample to lower it")
    if target_fs == seg.fs:
        return seg.copy()
    duration = seg.samples.size / seg.fs
    t_old = np.arange(seg.samples.size) / seg.fs
    t_new = np.arange(int(round(duration * target_fs))) / target_fs
    return SignalSegment(np.interp(t_new, t_old, seg.samples), target_fs, seg.t0)


def apply_degradation(seg: SignalSegment, spec: DegradationSpec, seed: int = 0) -> SignalSegment:
    """Apply one degraded-acquisition condition to a copy of a stream."""
    spec.validate()
    if spec.kind == "packet_loss":
        return simulate_packet_loss(seg, spec.loss_rate, seed)
    if spec.kind == "resample":
        return resample(seg, spec.target_fs)
    duration = seg.samples.size / seg.fs
    if spec.removal_window >= duration:
        raise ValueError("removal_window must be shorter than the stream")
    event = SporadicEventSpec(
        kind="removal_flatline",
        start=0.5 * (duration - spec.removal_window),
        duration=spec.removal_window,
        magnitude=0.02,  # residual sensor floor while unworn
    )
    return inject_event(seg, event, seed)


def stream_distances(stream: SignalSegment, profile: AuthProfile, pipeline: AuthPipeline) -> np.ndarray:
    """Distance of every non-overlapping stream window to the enrolled center."""
    emb = pipeline.embed_stream(stream)
    return np.linalg.norm(emb - profile.center, axis=1)


def degraded_rates(profile, pipeline, genuine, impostors, spec=None, seed=0) -> dict:
    """Error rates for one acquisition condition.

    Degrades the genuine stream and each impostor stream (when a spec
    is given), embeds their windows against the clean enrollment, and
    reports FAR/FRR at the enrolled threshold plus the pooled EER.
    Resampled captures are linearly reconstructed back to the
    pipeline rate first.
    """
    def prep(s):
        if spec is None:
            return s
        d = apply_degradation(s, spec, seed)
        if d.fs != pipeline.fs:
            d = reconstruct_rate(d, pipeline.fs)
        return d

    d_gen = stream_distances(prep(genuine), profile, pipeline)
    d_imp = np.concatenate([stream_distances(prep(s), profile, pipeline) for s in impostors])
    far, frr = far_frr(d_gen, d_imp, profile.tau)
    _, far_e, frr_e = eer_threshold(d_gen, d_imp)
    return {
        "far_pct": 100.0 * far,
        "frr_pct": 100.0 * frr,
        "eer_pct": 100.0 * 0.5 * (far_e + frr_e),
    }


# ---------------------------------------------------------------------------
# variability analytics


def waveform_similarity(a, b) -> float:
    """Pearson correlation between two equal-length cycles."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.size != b.size:
        raise ValueError("cycles must be 1-D arrays of equal length")
    if a.size < 3:
        raise ValueError(f"cycles need at least 3 samples, got {a.size}")
    if np.std(a) == 0.0 or np.std(b) == 0.0:
        raise ValueError("cannot correlate a zero-variance cycle")
    return float(np.corrcoef(a, b)[0, 1])


def _search_half_width(dt: float) -> float:
    # narrow enough to stay between neighbouring deflections, wide
    # enough to absorb beat-scale timing jitter
    return max(0.015, min(0.035, 0.45 * abs(dt)))


def fiducial_intervals(seg: SignalSegment, template, cfg: MotionConfig | None = None) -> dict:
    """Per-beat intervals from the dominant peak to H, I and L.

    Dominant peaks are detected on the standardized signal; each
    companion deflection is then located as the signed extremum
    inside a window centred on its template offset. Returns
    {"J-H": {...}, "J-I": {...}, "J-L": {...}} with mean and std in
    seconds plus the count of beats measured.
    """
    z = zscore(seg)
    peaks, _ = detect_peaks(z, cfg)
    if peaks.size < 2:
        raise ValueError("no detectable cardiac cycles in the segment")
    try:
        j_off = template["J"].offset
        targets = {lbl: template[lbl] for lbl in ("H", "I", "L")}
    except KeyError as exc:
        raise ValueError(f"template lacks deflection {exc.args[0]!r} needed for interval analysis")

    fs = seg.fs
    x = z.samples
    out = {}
    for lbl, defl in targets.items():
        dt = defl.offset - j_off
        half = int(round(_search_half_width(dt) * fs))
        center = int(round(dt * fs))
        intervals = []
        for j in peaks:
            lo = j + center - half
            hi = j + center + half + 1
            if lo < 0 or hi > x.size:
                continue
            wnd = x[lo:hi]
            pos = int(np.argmax(wnd)) if defl.amplitude >= 0 else int(np.argmin(wnd))
            intervals.append(abs(center - half + pos) / fs)
        if not intervals:
            raise ValueError(f"no complete beats to measure the J-{lbl} interval")
        arr = np.asarray(intervals)
        out[f"J-{lbl}"] = {
            "mean_s": float(arr.mean()),
            "std_s": float(arr.std()),
            "n": int(arr.size),
        }
    return out


# ---------------------------------------------------------------------------
# report emission


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _svg_bars(rows, path: Path) -> None:
    """Write a FAR/FRR bar pair per user as a standalone SVG."""
    width, height, pad = 900, 320, 45
    plot_w, plot_h = width - 2 * pad, height - 2 * pad
    top = max([max(r.far_pct, r.frr_pct) for r in rows], default=0.0)
    top = max(top, 1.0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{pad - 20}" font-size="12">error rate (%), dark = FAR, light = FRR</text>',
        f'<text x="8" y="{pad + 4}" font-size="10">{_fmt(top)}</text>',
    ]
    if rows:
        slot = plot_w / len(rows)
        bar = min(18.0, slot / 3)
        for i, r in enumerate(rows):
            x0 = pad + i * slot + slot / 2
            for off, v, color in ((-bar, r.far_pct, "#444444"), (0.0, r.frr_pct, "#aaaaaa")):
                h = plot_h * v / top
                parts.append(
                    f'<rect x="{x0 + off:.2f}" y="{height - pad - h:.2f}" '
                    f'width="{bar:.2f}" height="{h:.2f}" fill="{color}"/>'
                )
            parts.append(
                f'<text x="{x0:.2f}" y="{height - pad + 14}" font-size="9" '
                f'text-anchor="middle">{r.user_id}</text>'
            )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def _svg_curves(rows, path: Path) -> None:
    """Degradation curves: one polyline of EER vs level per kind."""
    width, height, pad = 640, 320, 50
    plot_w, plot_h = width - 2 * pad, height - 2 * pad
    kinds = sorted({r["kind"] for r in rows})
    top = max([r["eer_pct"] for r in rows], default=0.0)
    top = max(top, 1.0)
    colors = {"packet_loss": "#333333", "resample": "#888888", "removal": "#bbbbbb"}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{pad - 20}" font-size="12">EER (%) vs degradation level</text>',
    ]
    for kind in kinds:
        pts = sorted((r["level"], r["eer_pct"]) for r in rows if r["kind"] == kind)
        levels = [p[0] for p in pts]
        lo, hi = min(levels), max(levels)
        span = (hi - lo) or 1.0
        coords = " ".join(
            f"{pad + plot_w * (lv - lo) / span:.2f},{height - pad - plot_h * v / top:.2f}"
            for lv, v in pts
        )
        color = colors.get(kind, "#555555")
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{width - pad - 150}" y="{pad + 14 * (kinds.index(kind) + 1)}" '
            f'font-size="11" fill="{color}">{kind}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def report(metrics: MetricsReport, out_dir, degradation=None):
    """Write the per-user CSV, summary JSON and diagnostic plots.

    The CSV and JSON are byte-stable across re-runs with the same
    inputs (no timestamps, fixed float formatting, sorted keys).
    degradation, when given, is a list of {kind, level, eer_pct}
    rows and adds a curves plot. Returns the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    rows = sorted(metrics.per_user, key=lambda r: r.user_id)
    csv_path = out_dir / "users.csv"
    lines = ["user_id,far_pct,frr_pct"]
    lines += [f"{r.user_id},{_fmt(r.far_pct)},{_fmt(r.frr_pct)}" for r in rows]
    csv_path.write_text("\n".join(lines) + "\n")
    written.append(csv_path)

    empty = not rows
    summary = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "n_users": len(rows),
        "mean_far_pct": None if empty else metrics.mean_far,
        "mean_frr_pct": None if empty else metrics.mean_frr,
        "eer_pct": None if empty else metrics.eer,
        "per_user": [asdict(r) for r in rows],
        "details": _json_safe(metrics.details),
    }
    json_path = out_dir / "summary.json"
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(json_path)

    bars_path = out_dir / "far_frr_bars.svg"
    _svg_bars(rows, bars_path)
    written.append(bars_path)

    if degradation is not None:
        curves_path = out_dir / "degradation_curves.svg"
        _svg_curves(list(degradation), curves_path)
        written.append(curves_path)
    return written
