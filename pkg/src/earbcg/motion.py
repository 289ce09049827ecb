"""Sporadic-interference detection and adaptive-filter recovery.

Inherent sensor noise is handled in the wavelet pipeline; this module
covers the other regime: transient disturbances (bumps, shakes, the
sensor leaving the ear) that break the signal's beat-to-beat
regularity. Detection is a periodicity test on peak trains; recovery
cancels narrowband oscillation bursts, then runs a recursive-least-
squares filter driven by a beat-locked periodic reference, with a
forgetting factor that reacts to motion intensity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .core import SignalSegment

__all__ = [
    "MotionConfig",
    "PeriodicityReport",
    "RlsConfig",
    "RlsState",
    "zscore",
    "detect_peaks",
    "periodicity",
    "fluctuation_ratio",
    "forgetting_factor",
    "rls_step",
    "denoise_sporadic",
]

_SIGMA_FLOOR = 1e-8  # guards the fluctuation ratio against flat references


@dataclass
class MotionConfig:
    """Thresholds for the periodicity test.

    hr_max bounds the plausible beat rate and sets the minimum peak
    spacing; prominence is in z-scored units.
    """

    hr_max: float = 120.0
    prominence_min: float = 0.3
    cv_int_thresh: float = 0.1
    cv_amp_thresh: float = 0.2
    std_window: float = 1.0

    def validate(self) -> None:
        if self.hr_max <= 0:
            raise ValueError(f"hr_max must be positive, got {self.hr_max}")
        for name in ("prominence_min", "cv_int_thresh", "cv_amp_thresh", "std_window"):
            v = getattr(self, name)
            if v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")


@dataclass
class PeriodicityReport:
    peak_indices: np.ndarray
    peak_amps: np.ndarray
    cv_interval: float  # nan when fewer than 2 intervals
    cv_amp: float
    is_periodic: bool

    def to_dict(self) -> dict:
        return {
            "peak_indices": [int(i) for i in self.peak_indices],
            "peak_amps": [float(a) for a in self.peak_amps],
            "cv_interval": None if np.isnan(self.cv_interval) else float(self.cv_interval),
            "cv_amp": None if np.isnan(self.cv_amp) else float(self.cv_amp),
            "is_periodic": bool(self.is_periodic),
        }


@dataclass
class RlsConfig:
    order: int = 8
    delta: float = 0.01  # P starts at I/delta
    kappa: float = 0.05
    alpha_min: float = 0.90
    alpha_max: float = 0.9999

    def validate(self) -> None:
        if self.order < 1:
            raise ValueError(f"filter order must be >= 1, got {self.order}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not 0.0 < self.alpha_min < 1.0:
            raise ValueError(f"alpha_min must be in (0, 1), got {self.alpha_min}")
        if not self.alpha_min <= self.alpha_max <= 1.0:
            raise ValueError(
                f"alpha bounds out of order: [{self.alpha_min}, {self.alpha_max}]"
            )


@dataclass
class RlsState:
    weights: np.ndarray
    inv_corr: np.ndarray  # P, kept symmetric positive definite
    order: int
    kappa: float
    alpha_bounds: tuple[float, float]
    ref_buffer: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def fresh(cls, cfg: RlsConfig | None = None) -> "RlsState":
        cfg = cfg or RlsConfig()
        cfg.validate()
        m = cfg.order
        return cls(
            weights=np.zeros(m),
            inv_corr=np.eye(m) / cfg.delta,
            order=m,
            kappa=cfg.kappa,
            alpha_bounds=(cfg.alpha_min, cfg.alpha_max),
            ref_buffer=np.zeros(m),
        )


def zscore(seg: SignalSegment) -> SignalSegment:
    """Standardize to zero mean, unit sample std."""
    x = seg.samples
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if sd == 0.0:
        raise ValueError("cannot z-score a constant segment")
    return SignalSegment((x - x.mean()) / sd, seg.fs, seg.t0)


def detect_peaks(
    seg: SignalSegment, cfg: MotionConfig | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Local maxima with prominence >= prominence_min, spacing > d_min.

    d_min is the sample count of the shortest plausible beat interval
    (hr_max); among conflicting candidates the taller peak survives.
    """
    cfg = cfg or MotionConfig()
    cfg.validate()
    d_min = int(np.floor(seg.fs * 60.0 / cfg.hr_max))
    idx, _ = find_peaks(
        seg.samples, distance=d_min + 1, prominence=cfg.prominence_min
    )
    return idx, seg.samples[idx]


def _cv(values: np.ndarray) -> float:
    if values.size < 2:
        return float("nan")
    mean = float(values.mean())
    if mean == 0.0:
        return float("inf")
    return float(np.std(values, ddof=1) / mean)


def periodicity(seg: SignalSegment, cfg: MotionConfig | None = None) -> PeriodicityReport:
    """Classify a segment as heartbeat-periodic or interference.

    Periodic means at least 3 detected peaks whose intervals and
    amplitudes are both steady (coefficient of variation below the
    configured thresholds). Constant segments are non-periodic.
    """
    cfg = cfg or MotionConfig()
    try:
        z = zscore(seg)
    except ValueError:
        empty = np.zeros(0)
        return PeriodicityReport(empty.astype(int), empty, float("nan"), float("nan"), False)
    idx, amps = detect_peaks(z, cfg)
    if idx.size < 3:
        cv_i = _cv(np.diff(idx) / seg.fs) if idx.size >= 2 else float("nan")
        cv_a = _cv(amps) if idx.size >= 2 else float("nan")
        return PeriodicityReport(idx, amps, cv_i, cv_a, False)
    cv_i = _cv(np.diff(idx) / seg.fs)
    cv_a = _cv(amps)
    ok = cv_i < cfg.cv_int_thresh and cv_a < cfg.cv_amp_thresh
    return PeriodicityReport(idx, amps, cv_i, cv_a, bool(ok))


def fluctuation_ratio(x_win: np.ndarray, ref_win: np.ndarray) -> float:
    """Motion-intensity indicator: std of the live window over std of
    the reference window, floored to avoid division blow-up."""
    sx = float(np.std(np.asarray(x_win, dtype=float)))
    sr = float(np.std(np.asarray(ref_win, dtype=float)))
    return sx / max(sr, _SIGMA_FLOOR)


def forgetting_factor(psi: float, kappa: float, bounds: tuple[float, float]) -> float:
    """alpha = exp(-kappa * psi), clamped to the stability bounds."""
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    lo, hi = bounds
    return float(np.clip(np.exp(-kappa * psi), lo, hi))


def rls_step(
    state: RlsState, u: np.ndarray, d: float, alpha: float
) -> tuple[RlsState, float, float]:
    """One recursive-least-squares update.

    Gain k = P u / (alpha + u' P u); output y = w' u; innovation
    e = d - y; then w += k e and P = (P - k u' P)/alpha, re-symmetrized
    to stop round-off from skewing it. Mutates state in place and
    returns it.
    """
    u = np.asarray(u, dtype=float)
    P = state.inv_corr
    Pu = P @ u
    k = Pu / (alpha + float(u @ Pu))
    y = float(state.weights @ u)
    e = float(d) - y
    state.weights = state.weights + k * e
    P_new = (P - np.outer(k, u @ P)) / alpha
    state.inv_corr = 0.5 * (P_new + P_new.T)
    if not (
        np.all(np.isfinite(state.weights)) and np.all(np.isfinite(state.inv_corr))
    ):
        raise FloatingPointError(
            "RLS update produced non-finite values; reset the state"
        )
    return state, y, e


# --- recovery internals -------------------------------------------------
#
# The filter's reference must stay beat-aligned with the live signal or
# the regressor decorrelates within a few beats. The helpers below build
# a one-beat template from the reference, keep it phase-locked to the
# live stream, and strip narrowband oscillation bursts before the RLS
# ever sees them (a large tonal artifact otherwise drags the weights
# away from the beat mapping faster than they can recover afterwards).

_LINE_BAND = (1.5, 8.0)  # Hz; oscillation bursts live here, beat fundamentals below
_LINE_SIG_GATE = 1.2  # line-to-residual RMS ratio that marks a burst block
_LOCK_SEARCH = 5  # samples; per-beat re-lock search radius
_LOCK_MIN = 0.8  # correlation a re-lock must reach to move the anchor


def _beat_period(ref_z: np.ndarray, fs: float, hr_max: float) -> int:
    """Beat period in samples via circular autocorrelation of the
    z-scored reference. The argmax can land on a multiple of the true
    period when adjacent beats are unluckily jittered, so near-as-strong
    sub-multiples are preferred."""
    d_min = int(np.floor(fs * 60.0 / hr_max))
    lo, hi = d_min + 1, min(ref_z.size - 1, int(2.5 * fs))
    if hi <= lo:
        return ref_z.size
    f = np.fft.rfft(ref_z)
    ac = np.fft.irfft(f * np.conj(f), n=ref_z.size)
    q = lo + int(np.argmax(ac[lo : hi + 1]))
    for k in (3, 2):
        cand = int(round(q / k))
        if cand >= lo and ac[cand] >= 0.75 * ac[q]:
            q = cand
    return q


def _fold_beats(ref_samples: np.ndarray, period: int) -> np.ndarray:
    """One-beat template: average whole beats after circularly aligning
    each to the first, so timing jitter does not smear the fold."""
    nb = max(1, ref_samples.size // period)
    beats = ref_samples[: nb * period].reshape(nb, period)
    anchor = beats[0] - beats[0].mean()
    anchor_f = np.fft.rfft(anchor)
    acc = beats[0].astype(float).copy()
    for k in range(1, nb):
        b = beats[k] - beats[k].mean()
        xc = np.fft.irfft(anchor_f * np.conj(np.fft.rfft(b)), n=period)
        acc += np.roll(beats[k], int(np.argmax(xc)))
    return acc / nb


def _dominant_line_freq(win: np.ndarray, fs: float) -> float:
    """Frequency of the strongest spectral line in the burst band,
    refined by parabolic interpolation of the zero-padded FFT peak."""
    pad = 8 * win.size
    xw = win - win.mean()
    spec = np.abs(np.fft.rfft(xw, n=pad))
    freqs = np.fft.rfftfreq(pad, 1.0 / fs)
    band = np.where((freqs >= _LINE_BAND[0]) & (freqs <= _LINE_BAND[1]))[0]
    j = band[int(np.argmax(spec[band]))]
    off = 0.0
    if 0 < j < spec.size - 1:
        s0, s1, s2 = spec[j - 1], spec[j], spec[j + 1]
        den = s0 - 2 * s1 + s2
        if den != 0:
            off = float(np.clip(0.5 * (s0 - s2) / den, -0.5, 0.5))
    return float(freqs[j] + off * (freqs[1] - freqs[0]))


def _line_significance(win: np.ndarray, fs: float) -> float:
    """RMS of the best-fit sinusoid at the dominant line over the RMS of
    what remains. Tonal bursts score far above beat-only blocks; spike
    bursts and flat dropouts are broadband and score low."""
    f_hat = _dominant_line_freq(win, fs)
    t = np.arange(win.size) / fs
    basis = np.column_stack(
        [np.ones(win.size), np.sin(2 * np.pi * f_hat * t), np.cos(2 * np.pi * f_hat * t)]
    )
    coef, *_ = np.linalg.lstsq(basis, win, rcond=None)
    line = basis[:, 1:] @ coef[1:]
    resid = win - coef[0] - line
    return float(np.sqrt(np.mean(line**2)) / (np.sqrt(np.mean(resid**2)) + _SIGMA_FLOOR))


def _cancel_tonal_bursts(x: np.ndarray, fs: float, period: int) -> np.ndarray:
    """Subtract gated sinusoidal bursts from the signal.

    Beat-length blocks whose dominant spectral line dwarfs the residual
    mark a burst; contiguous marked blocks form one event. Each event is
    modelled as a single constant-frequency sinusoid switched on and off
    at unknown instants: the on/off edges are located by change-point
    search (least-squares fit per candidate edge, best total residual
    wins), then the one fitted sinusoid is removed over exactly that
    span. Clean samples on either side of an edge stay untouched.
    """
    n = x.size
    bounds = list(range(0, n, period))
    sigs = []
    for b0 in bounds:
        b1 = min(b0 + period, n)
        lo = max(0, b1 - period)
        sigs.append(_line_significance(x[lo:b1], fs))
    marked = [i for i, s in enumerate(sigs) if s >= _LINE_SIG_GATE]
    if not marked:
        return x.copy()
    runs = []
    start = prev = marked[0]
    for i in marked[1:]:
        if i == prev + 1:
            prev = i
        else:
            runs.append((start, prev))
            start = prev = i
    runs.append((start, prev))

    out = x.copy()
    tt = np.arange(n)
    for i0, i1 in runs:
        rs = bounds[i0]
        re = min(bounds[i1] + period, n)
        f_hat = _dominant_line_freq(x[rs:re], fs)
        w = 2 * np.pi * f_hat / fs
        sin_t = np.sin(w * tt)
        cos_t = np.cos(w * tt)
        lo_s = max(0, rs - period)
        hi_e = min(n, re + period)

        def gated_sse(e0: int, e1: int) -> tuple[float, np.ndarray | None]:
            piece = out[lo_s:hi_e].copy()
            mask = (tt[lo_s:hi_e] >= e0) & (tt[lo_s:hi_e] < e1)
            if mask.sum() < 8:
                return float(np.sum((piece - piece.mean()) ** 2)), None
            basis = np.column_stack([sin_t[lo_s:hi_e][mask], cos_t[lo_s:hi_e][mask]])
            coef, *_ = np.linalg.lstsq(basis, piece[mask], rcond=None)
            piece[mask] -= basis @ coef
            return float(np.sum((piece - piece.mean()) ** 2)), coef

        mid = (rs + re) // 2
        best_sse, best_e0 = np.inf, rs
        for e0 in range(lo_s, mid):
            v, _ = gated_sse(e0, re)
            if v < best_sse:
                best_sse, best_e0 = v, e0
        best_sse, best_e1 = np.inf, re
        for e1 in range(mid + 1, hi_e + 1):
            v, _ = gated_sse(best_e0, e1)
            if v < best_sse:
                best_sse, best_e1 = v, e1
        _, coef = gated_sse(best_e0, best_e1)
        if coef is not None:
            sl = slice(best_e0, best_e1)
            out[sl] -= coef[0] * sin_t[sl] + coef[1] * cos_t[sl]
    return out


def denoise_sporadic(
    seg: SignalSegment,
    ref: SignalSegment | None,
    cfg: MotionConfig | None = None,
    rls_cfg: RlsConfig | None = None,
) -> SignalSegment:
    """Gate on periodicity; if broken, re-estimate the beats by RLS.

    A segment that already passes the periodicity test is returned
    untouched. Otherwise the recovery pipeline runs:

    1. Tonal oscillation bursts are located and subtracted (change-point
       fit of one gated sinusoid per burst).
    2. The reference is folded into a one-beat template and tiled; the
       tile is phase-locked to the live signal: an initial full-period
       alignment sweep, then a guarded re-lock each beat (accepted only
       above a correlation floor, with a full re-acquisition sweep as
       fallback) and a rate-compensated fractional drift between locks.
    3. Each sample is predicted from the most recent order-length window
       of the locked tile, with the forgetting factor recomputed every
       sample from the live-to-reference fluctuation ratio over
       std_window. The output is the filter's prediction sequence: a
       heartbeat-correlated re-estimate of the contaminated stretch.
    """
    cfg = cfg or MotionConfig()
    cfg.validate()
    rls_cfg = rls_cfg or RlsConfig()
    if ref is None:
        raise ValueError("denoise_sporadic needs a periodic reference segment")
    if ref.fs != seg.fs:
        raise ValueError(f"reference fs {ref.fs} does not match segment fs {seg.fs}")

    if periodicity(seg, cfg).is_periodic:
        return seg.copy()

    m = rls_cfg.order
    x = seg.samples.astype(float)
    n = x.size
    fs = seg.fs
    period = _beat_period(zscore(ref).samples, fs, cfg.hr_max)
    fold = _fold_beats(ref.samples, period)
    fold_z = (fold - fold.mean()) / max(float(fold.std()), _SIGMA_FLOOR)

    # the anchor indexes into tiles long enough that re-locks never run
    # off either end; phase only matters modulo the period
    pad = 6 * period
    reps = (n + 2 * pad) // period + 2
    tile_z = np.tile(fold_z, reps)
    tile_raw = np.tile(fold, reps)

    cleaned = _cancel_tonal_bursts(x, fs, period)

    w0 = min(2 * period, n)
    head = cleaned[:w0] - cleaned[:w0].mean()
    head_norm = float(np.linalg.norm(head))
    best_c, best_lag = -2.0, 0
    for lag in range(period):
        r = tile_z[lag : lag + w0]
        rm = r - r.mean()
        den = float(np.linalg.norm(rm)) * head_norm
        c = float(head @ rm) / den if den > 0 else 0.0
        if c > best_c:
            best_c, best_lag = c, lag
    anchor = pad + best_lag

    frac = 0.0  # sub-sample drift accumulator
    rate = 0.0  # samples of drift per sample, learned from lock deltas
    last_lock = 0
    w_len = max(2, int(round(cfg.std_window * fs)))
    state = RlsState.fresh(rls_cfg)
    out = np.empty(n)
    for b0 in range(0, n, period):
        b1 = min(b0 + period, n)
        if b0 > 0:
            win = cleaned[max(0, b1 - period) : b1]
            wc = win - win.mean()
            wn = float(np.linalg.norm(wc))

            def lock_sweep(deltas: range) -> tuple[float, int]:
                bb, bd = -2.0, 0
                for d in deltas:
                    r = tile_z[anchor + d + b1 - win.size : anchor + d + b1]
                    rm = r - r.mean()
                    den = float(np.linalg.norm(rm)) * wn
                    c = float(wc @ rm) / den if den > 0 else 0.0
                    if c > bb:
                        bb, bd = c, d
                return bb, bd

            bb, bd = lock_sweep(range(-_LOCK_SEARCH, _LOCK_SEARCH + 1))
            if bb < _LOCK_MIN:
                bb, bd = lock_sweep(range(-(period // 2), period - period // 2))
            if bb >= _LOCK_MIN:
                anchor += bd
                dt = b0 - last_lock
                if 0 < dt <= 3 * period and abs(bd) <= _LOCK_SEARCH:
                    rate = 0.6 * rate + 0.4 * (bd / dt)
                last_lock = b0
                anchor = pad + (anchor - pad) % period
        for t in range(b0, b1):
            frac += rate
            if frac >= 1.0:
                anchor += 1
                frac -= 1.0
            elif frac <= -1.0:
                anchor -= 1
                frac += 1.0
            u = tile_z[anchor + t - m + 1 : anchor + t + 1][::-1]
            lo = max(0, t + 1 - w_len)
            psi = fluctuation_ratio(cleaned[lo : t + 1], tile_raw[anchor + lo : anchor + t + 1])
            alpha = forgetting_factor(psi, state.kappa, state.alpha_bounds)
            state, y, _ = rls_step(state, u, float(cleaned[t]), alpha)
            out[t] = y
    return SignalSegment(out, seg.fs, seg.t0)
