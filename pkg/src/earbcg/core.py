"""Shared signal container and file formats.

Everything downstream consumes SignalSegment: a uniformly sampled
acceleration trace with its sampling rate and a recording-relative time
origin. Signals round-trip through a small CSV format (two header lines,
one sample per line) and cohorts through a JSON manifest next to the
per-subject CSV files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SignalSegment",
    "read_signal_csv",
    "write_signal_csv",
    "sliding_windows",
]


@dataclass
class SignalSegment:
    """Uniformly sampled acceleration time series.

    samples : acceleration values in m/s^2
    fs      : sampling rate in Hz, > 0
    t0      : recording-relative origin of the first sample, seconds
    """

    samples: np.ndarray
    fs: float
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if not self.fs > 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.fs

    def copy(self) -> "SignalSegment":
        return SignalSegment(self.samples.copy(), self.fs, self.t0)


def write_signal_csv(path, seg: SignalSegment) -> None:
    """Write a segment as `fs=`/`t0=` header lines plus one value per line."""
    path = Path(path)
    lines = [f"fs={seg.fs!r}", f"t0={seg.t0!r}"]
    lines.extend(repr(float(v)) for v in seg.samples)
    path.write_text("\n".join(lines) + "\n")


def read_signal_csv(path) -> SignalSegment:
    """Read a segment written by write_signal_csv."""
    path = Path(path)
    with path.open() as fh:
        header_fs = fh.readline().strip()
        header_t0 = fh.readline().strip()
        if not header_fs.startswith("fs=") or not header_t0.startswith("t0="):
            raise ValueError(f"{path}: expected 'fs=' and 't0=' header lines")
        fs = float(header_fs[3:])
        t0 = float(header_t0[3:])
        samples = np.loadtxt(fh, dtype=np.float64, ndmin=1)
    return SignalSegment(samples, fs, t0)


def sliding_windows(seg: SignalSegment, window_s: float, step_s: float):
    """Yield overlapping sub-segments of length window_s every step_s.

    Produces floor((n - w) / s) + 1 windows; a segment shorter than the
    window yields nothing.
    """
    if window_s <= 0 or step_s <= 0:
        raise ValueError("window and step must be positive")
    w = int(round(window_s * seg.fs))
    s = int(round(step_s * seg.fs))
    n = seg.samples.size
    if w > n:
        return
    for start in range(0, n - w + 1, s):
        yield SignalSegment(
            seg.samples[start:start + w].copy(),
            seg.fs,
            seg.t0 + start / seg.fs,
        )
