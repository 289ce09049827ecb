"""Undecimated (stationary) wavelet transform with an exact inverse.

The analyzing wavelet is a Meyer-type pair: the lowpass FIR is sampled
from the closed-form Meyer frequency response (flat to fs/6, raised-
cosine rolloff to fs/3 via the classic quartic auxiliary polynomial),
truncated to 62 symmetric taps; the highpass is its quadrature mirror.
Analysis convolves with level-j filters upsampled by 2^(j-1) (the
"a trous" scheme) under periodic extension, so every level keeps the
input length and the transform commutes with circular shifts.

Synthesis inverts each level in the frequency domain through the
normalized dual
    A_{j-1} = (conj(H_j) A_j + conj(G_j) D_j) / (|H_j|^2 + |G_j|^2),
which reproduces the input to machine precision for untouched
coefficients and acts as the least-squares inverse once coefficients
have been shrunk.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import SignalSegment

__all__ = [
    "WaveletBank",
    "SwtDecomposition",
    "meyer_bank",
    "swt_decompose",
    "swt_reconstruct",
    "level_band",
    "level_energies",
]


def _meyer_aux(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)


def _meyer_lowpass_response(omega: np.ndarray) -> np.ndarray:
    """Meyer refinement-filter magnitude on omega in [-pi, pi]."""
    w = np.abs(omega)
    H = np.zeros_like(w)
    H[w <= np.pi / 3.0] = np.sqrt(2.0)
    band = (w > np.pi / 3.0) & (w < 2.0 * np.pi / 3.0)
    H[band] = np.sqrt(2.0) * np.cos(np.pi / 2.0 * _meyer_aux(3.0 * w[band] / np.pi - 1.0))
    return H


@dataclass
class WaveletBank:
    """A perfect-reconstruction lowpass/highpass FIR pair."""

    lowpass: np.ndarray
    highpass: np.ndarray
    name: str = "meyer62"

    def __post_init__(self):
        self.lowpass = np.asarray(self.lowpass, dtype=np.float64)
        self.highpass = np.asarray(self.highpass, dtype=np.float64)
        if self.lowpass.shape != self.highpass.shape or self.lowpass.ndim != 1:
            raise ValueError("lowpass and highpass must be 1-D arrays of equal length")
        if self.lowpass.size % 2 != 0:
            raise ValueError("filter length must be even")
        L = self.lowpass.size
        qmf = ((-1.0) ** np.arange(L)) * self.lowpass[::-1]
        if not np.allclose(self.highpass, qmf, atol=1e-12):
            raise ValueError("highpass must be the quadrature mirror of lowpass")


@lru_cache(maxsize=4)
def _meyer_taps(taps: int = 62, grid: int = 1 << 14) -> tuple:
    k = np.arange(grid)
    omega = 2.0 * np.pi * k / grid
    om = np.where(omega > np.pi, omega - 2.0 * np.pi, omega)
    H = _meyer_lowpass_response(om)
    tau = (taps - 1) / 2.0
    n = np.arange(taps)
    # inverse DTFT with half-sample linear phase -> symmetric even-length FIR
    h = (np.exp(1j * np.outer(n - tau, om)) @ H).real / grid
    return tuple(h)


def meyer_bank(taps: int = 62) -> WaveletBank:
    """Build the Meyer-type analysis bank (62 taps by default)."""
    h = np.asarray(_meyer_taps(taps))
    g = ((-1.0) ** np.arange(taps)) * h[::-1]
    return WaveletBank(h, g)


@dataclass
class SwtDecomposition:
    """Per-level detail arrays D1..D_levels plus the final approximation.

    All arrays share the (padded) analysis length; n_orig remembers how
    many leading samples belong to the caller's signal.
    """

    details: list[np.ndarray]
    approx: np.ndarray
    fs: float
    bank: WaveletBank
    n_orig: int
    t0: float = 0.0

    @property
    def levels(self) -> int:
        return len(self.details)

    def copy(self) -> "SwtDecomposition":
        return SwtDecomposition(
            [d.copy() for d in self.details],
            self.approx.copy(),
            self.fs,
            self.bank,
            self.n_orig,
            self.t0,
        )


def level_band(fs: float, level: int) -> tuple[float, float]:
    """Nominal passband of detail level j: fs/2^(j+1) .. fs/2^j."""
    return fs / 2.0 ** (level + 1), fs / 2.0**level


def _folded_kernel_fft(filt: np.ndarray, upsample: int, n: int) -> np.ndarray:
    """FFT of the level kernel: filt upsampled by `upsample`, wrapped mod n."""
    ker = np.zeros(n)
    idx = (np.arange(filt.size) * upsample) % n
    np.add.at(ker, idx, filt)
    return np.fft.rfft(ker)


def _level_ffts(bank: WaveletBank, n: int, levels: int):
    Hs, Gs = [], []
    for j in range(1, levels + 1):
        up = 2 ** (j - 1)
        Hs.append(_folded_kernel_fft(bank.lowpass, up, n))
        Gs.append(_folded_kernel_fft(bank.highpass, up, n))
    return Hs, Gs


def swt_decompose(seg: SignalSegment, bank: WaveletBank | None = None, levels: int = 6) -> SwtDecomposition:
    """Undecimated wavelet analysis; pads by edge replication to a
    multiple of 2^levels, recorded in n_orig for the inverse."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    bank = bank or meyer_bank()
    x = seg.samples
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot decompose non-finite samples")
    block = 2**levels
    n_orig = x.size
    pad = (-n_orig) % block
    if pad:
        x = np.concatenate([x, np.full(pad, x[-1])])
    n = x.size

    Hs, Gs = _level_ffts(bank, n, levels)
    A = np.fft.rfft(x)
    details = []
    for j in range(levels):
        details.append(np.fft.irfft(Gs[j] * A, n))
        A = Hs[j] * A
    approx = np.fft.irfft(A, n)
    return SwtDecomposition(details, approx, seg.fs, bank, n_orig, seg.t0)


def swt_reconstruct(dec: SwtDecomposition) -> SignalSegment:
    """Invert the analysis; trims padding back to the original length."""
    n = dec.approx.size
    for j, d in enumerate(dec.details, start=1):
        if d.size != n:
            raise ValueError(f"detail level {j} has length {d.size}, expected {n}")
    Hs, Gs = _level_ffts(dec.bank, n, dec.levels)
    A = np.fft.rfft(dec.approx)
    for j in reversed(range(dec.levels)):
        D = np.fft.rfft(dec.details[j])
        denom = np.abs(Hs[j]) ** 2 + np.abs(Gs[j]) ** 2
        if denom.min() < 1e-6:
            raise ValueError("filter bank loses a frequency bin; cannot invert")
        A = (np.conj(Hs[j]) * A + np.conj(Gs[j]) * D) / denom
    x = np.fft.irfft(A, n)[: dec.n_orig]
    return SignalSegment(x, dec.fs, dec.t0)


def level_energies(dec: SwtDecomposition) -> dict[str, float]:
    """Sum of squared coefficients per level (D1..Dk then approx)."""
    out = {f"D{j}": float(np.sum(d[: dec.n_orig] ** 2)) for j, d in enumerate(dec.details, 1)}
    out[f"A{dec.levels}"] = float(np.sum(dec.approx[: dec.n_orig] ** 2))
    return out
