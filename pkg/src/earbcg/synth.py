"""Synthetic in-ear BCG generator.

Renders per-subject cardiac cycles as a sum of Gaussian bumps, one per
deflection of the classical H..N sequence, then concatenates jittered
beats and layers on inherent interference (sensor noise, respiration,
postural sway) and optional sporadic events (spikes, shaking, removal).
Every generator is a pure function of its arguments including the seed,
so any downstream test can regenerate its ground truth exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path
import json

import numpy as np

from .core import SignalSegment, write_signal_csv, read_signal_csv

__all__ = [
    "Deflection",
    "MorphologyTemplate",
    "SubjectProfile",
    "NoiseSpec",
    "SporadicEventSpec",
    "default_template",
    "synth_cycle",
    "synth_recording",
    "inject_event",
    "make_cohort",
    "save_cohort",
    "load_cohort",
]

DEFLECTION_LABELS = ("H", "I", "J", "K", "L", "M", "N")


@dataclass
class Deflection:
    label: str
    offset: float       # seconds from cycle start
    amplitude: float    # m/s^2, signed
    width: float        # Gaussian sigma, seconds


@dataclass
class MorphologyTemplate:
    """Seven-deflection cardiac cycle shape.

    Invariants (checked by validate, not construction, so analysis code
    can probe deliberately malformed templates): labels are H..N in
    order, offsets strictly increase, J is the dominant positive peak,
    and the I/K troughs flanking J are negative.
    """

    deflections: list[Deflection]

    def validate(self) -> None:
        if len(self.deflections) != 7:
            raise ValueError(
                f"template needs exactly 7 deflections, got {len(self.deflections)}"
            )
        labels = tuple(d.label for d in self.deflections)
        if labels != DEFLECTION_LABELS:
            raise ValueError(f"deflection labels must be {DEFLECTION_LABELS}, got {labels}")
        offsets = [d.offset for d in self.deflections]
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise ValueError(f"offsets must be strictly increasing, got {offsets}")
        amps = {d.label: d.amplitude for d in self.deflections}
        # weak inequalities so the degenerate all-zero template renders
        if amps["J"] < 0 or amps["J"] < max(a for a in amps.values()):
            raise ValueError("J must carry the maximum positive amplitude")
        if amps["I"] > 0 or amps["K"] > 0:
            raise ValueError("I and K amplitudes must be negative")
        if any(d.width <= 0 for d in self.deflections):
            raise ValueError("widths must be positive")

    def __getitem__(self, label: str) -> Deflection:
        for d in self.deflections:
            if d.label == label:
                return d
        raise KeyError(label)

    @property
    def max_offset(self) -> float:
        return max(d.offset for d in self.deflections)

    def to_dict(self) -> dict:
        return {"deflections": [asdict(d) for d in self.deflections]}

    @classmethod
    def from_dict(cls, d: dict) -> "MorphologyTemplate":
        return cls([Deflection(**e) for e in d["deflections"]])


@dataclass
class SubjectProfile:
    """Generative parameters for one synthetic individual."""

    subject_id: str
    template: MorphologyTemplate
    hr_mean: float          # beats/min
    hr_jitter: float        # fractional std of per-beat period
    amp_jitter: float       # fractional std of per-beat amplitude scale
    rng_seed: int

    def validate(self) -> None:
        self.template.validate()
        if not 40.0 <= self.hr_mean <= 120.0:
            raise ValueError(f"hr_mean must be in [40, 120] bpm, got {self.hr_mean}")
        for name in ("hr_jitter", "amp_jitter"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.2:
                raise ValueError(f"{name} must be in [0, 0.2], got {v}")

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "template": self.template.to_dict(),
            "hr_mean": self.hr_mean,
            "hr_jitter": self.hr_jitter,
            "amp_jitter": self.amp_jitter,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubjectProfile":
        return cls(
            subject_id=d["subject_id"],
            template=MorphologyTemplate.from_dict(d["template"]),
            hr_mean=d["hr_mean"],
            hr_jitter=d["hr_jitter"],
            amp_jitter=d["amp_jitter"],
            rng_seed=d["rng_seed"],
        )


@dataclass
class NoiseSpec:
    """Inherent interference mixed into every recording."""

    sensor_sigma: float = 0.0      # Gaussian white noise std, m/s^2
    resp_amplitude: float = 0.0    # respiration sinusoid amplitude
    resp_freq: float = 0.27        # Hz, typical band 0.2-0.33
    sway_amplitude: float = 0.0    # postural sway sinusoid amplitude
    sway_freq: float = 0.5         # Hz

    def validate(self) -> None:
        if self.sensor_sigma < 0 or self.resp_amplitude < 0 or self.sway_amplitude < 0:
            raise ValueError("noise amplitudes must be non-negative")
        if self.resp_freq <= 0 or self.sway_freq <= 0:
            raise ValueError("noise frequencies must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SporadicEventSpec:
    """A transient interference event injected into a segment."""

    kind: str            # spike_burst | shake_oscillation | removal_flatline
    start: float         # seconds from segment start
    duration: float      # seconds
    magnitude: float     # m/s^2; for removal_flatline, replacement noise std

    KINDS = ("spike_burst", "shake_oscillation", "removal_flatline")

    def validate(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}; expected one of {self.KINDS}")
        if self.start < 0:
            raise ValueError("event start must be >= 0")
        if self.duration <= 0:
            raise ValueError("event duration must be positive")
        if self.magnitude < 0:
            raise ValueError("event magnitude must be >= 0")


def default_template() -> MorphologyTemplate:
    """Canonical cycle shape: J-dominant with flanking I/K troughs.

    Offsets and widths are free generator parameters chosen so that
    rendered cycles show the familiar H..N ordering with a 0.483 m/s^2
    J peak. The M trough depth balances the bump areas to zero: a
    cardiac acceleration cycle carries no net velocity change, and a
    zero-area cycle keeps beat-scale amplitude jitter out of the
    sub-cardiac band.
    """
    rows = [
        ("H", 0.12, +0.120, 0.018),
        ("I", 0.20, -0.300, 0.020),
        ("J", 0.26, +0.483, 0.022),
        ("K", 0.33, -0.420, 0.022),
        ("L", 0.41, +0.180, 0.025),
        ("M", 0.50, None, 0.028),
        ("N", 0.60, +0.080, 0.030),
    ]
    area = sum(a * w for _, _, a, w in rows if a is not None)
    rows[5] = ("M", 0.50, -area / rows[5][3], 0.028)
    return MorphologyTemplate([Deflection(*r) for r in rows])


def _render_bumps(template: MorphologyTemplate, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    for d in template.deflections:
        out += d.amplitude * np.exp(-((t - d.offset) ** 2) / (2.0 * d.width ** 2))
    return out


def synth_cycle(template: MorphologyTemplate, period: float, fs: float) -> SignalSegment:
    """Render one cardiac cycle of round(period*fs) samples."""
    template.validate()
    if template.max_offset >= period:
        raise ValueError(
            f"max deflection offset {template.max_offset} s does not fit in period {period} s"
        )
    # Undersampling guard: demand at least 2 samples across the +/-3 sigma
    # support of the narrowest bump, otherwise a deflection can vanish
    # between sample instants.
    min_width = min(d.width for d in template.deflections)
    if fs < 2.0 / (6.0 * min_width):
        raise ValueError(
            f"fs={fs} Hz undersamples bumps of width {min_width} s "
            f"(need >= {2.0 / (6.0 * min_width):.1f} Hz)"
        )
    n = int(round(period * fs))
    t = np.arange(n) / fs
    return SignalSegment(_render_bumps(template, t), fs)


def _draw_periods(profile: SubjectProfile, total_s: float, rng) -> np.ndarray:
    """Per-beat periods around 60/hr_mean, clipped so every cycle can hold
    the template with its bump tails."""
    base = 60.0 / profile.hr_mean
    floor = profile.template.max_offset + 3.0 * max(
        d.width for d in profile.template.deflections
    )
    periods = []
    acc = 0.0
    while acc < total_s + base:
        p = base * (1.0 + profile.hr_jitter * rng.standard_normal())
        p = max(p, floor * 1.02)
        periods.append(p)
        acc += p
    return np.asarray(periods)


def synth_recording(
    profile: SubjectProfile,
    duration: float,
    fs: float,
    noise: NoiseSpec | None = None,
) -> SignalSegment:
    """Concatenate jittered cycles and overlay inherent interference."""
    profile.validate()
    noise = noise or NoiseSpec()
    noise.validate()
    base_period = 60.0 / profile.hr_mean
    if duration < base_period:
        raise ValueError(
            f"duration {duration} s is shorter than one cardiac period {base_period:.3f} s"
        )
    rng = np.random.default_rng(profile.rng_seed)
    n_out = int(round(duration * fs))

    pieces = []
    total = 0
    for p in _draw_periods(profile, duration, rng):
        cyc = synth_cycle(profile.template, p, fs).samples
        scale = 1.0 + profile.amp_jitter * rng.standard_normal()
        pieces.append(cyc * scale)
        total += cyc.size
        if total >= n_out:
            break
    x = np.concatenate(pieces)[:n_out]

    t = np.arange(n_out) / fs
    if noise.sensor_sigma > 0:
        x = x + noise.sensor_sigma * rng.standard_normal(n_out)
    if noise.resp_amplitude > 0:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x = x + noise.resp_amplitude * np.sin(2.0 * np.pi * noise.resp_freq * t + phase)
    if noise.sway_amplitude > 0:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x = x + noise.sway_amplitude * np.sin(2.0 * np.pi * noise.sway_freq * t + phase)
    return SignalSegment(x, fs)


def inject_event(seg: SignalSegment, event: SporadicEventSpec, seed: int) -> SignalSegment:
    """Add one sporadic interference event to a copy of the segment."""
    event.validate()
    if event.magnitude == 0.0:
        return seg.copy()
    fs = seg.fs
    i0 = int(round(event.start * fs))
    i1 = int(round((event.start + event.duration) * fs))
    if i0 < 0 or i1 > seg.samples.size or i0 >= i1:
        raise ValueError(
            f"event window [{event.start}, {event.start + event.duration}] s "
            f"does not fit in a {seg.duration:.3f} s segment"
        )
    rng = np.random.default_rng(seed)
    out = seg.samples.copy()
    if event.kind == "spike_burst":
        # Sparse heavy-tailed impulses; Laplace gives the leptokurtic
        # amplitude statistics the sporadic detector keys on.
        n_spikes = max(1, int(round(event.duration * 8.0)))
        locs = rng.integers(i0, i1, size=n_spikes)
        out[locs] += rng.laplace(0.0, event.magnitude, size=n_spikes)
    elif event.kind == "shake_oscillation":
        freq = rng.uniform(2.0, 6.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        t = np.arange(i1 - i0) / fs
        out[i0:i1] += event.magnitude * np.sin(2.0 * np.pi * freq * t + phase)
    elif event.kind == "removal_flatline":
        # Earphone off the ear: cardiac content vanishes, only sensor
        # noise of the given std remains in the window.
        out[i0:i1] = rng.normal(0.0, event.magnitude, size=i1 - i0)
    return SignalSegment(out, fs, seg.t0)


# --- cohort generation -------------------------------------------------

# Dispersion of subject templates around the canonical one. The J peak
# lands uniformly over a wide window and the comb is rebuilt around it
# from multiplicative gap draws, cumulatively summed outward, so
# ordering can never break; each side's gaps are rescaled down when
# they would overrun the offset bounds, so a late J squeezes its
# diastolic tail instead of being rejected. Different subjects' combs
# therefore neither align nor share a common spacing; amplitude and
# width scales add shape variety on top.
_J_OFFSET_RANGE = (0.12, 0.48)  # s, uniform draw for the J peak
_STRETCH_CENTER = 0.80          # mean gap rescale, each side of J
_STRETCH_STD = 0.15             # fractional, about the center
_GAP_NOISE_STD = 0.30           # lognormal sigma per individual gap
_AMP_SCALE_STD = 0.45           # lognormal sigma, non-J amplitudes
_J_AMP_SCALE_STD = 0.20         # lognormal sigma, J amplitude
_WIDTH_SCALE_STD = 0.25         # lognormal sigma about the canonical width
_WIDTH_RANGE = (0.022, 0.042)   # s; see the width comment in the draw
_MIN_OFFSET = 0.02              # s, earliest allowed fiducial
_MAX_OFFSET = 0.63              # s, latest allowed fiducial
_MIN_GAP = 0.014                # s, floor for any drawn gap


def _draw_offsets(rng, base, j_range) -> list[float]:
    labels = [d.label for d in base.deflections]
    j_idx = labels.index("J")
    base_offs = [d.offset for d in base.deflections]
    base_gaps = np.diff(base_offs)
    j_off = rng.uniform(*j_range)

    def side_gaps(raw):
        u = np.clip(_STRETCH_CENTER * (1.0 + _STRETCH_STD * rng.standard_normal()), 0.55, 1.00)
        g = raw * u * np.exp(_GAP_NOISE_STD * rng.standard_normal(raw.size))
        return np.maximum(g, _MIN_GAP)

    head = side_gaps(base_gaps[:j_idx])
    tail = side_gaps(base_gaps[j_idx:])
    room_head = j_off - _MIN_OFFSET
    room_tail = _MAX_OFFSET - j_off
    if head.sum() > room_head:
        head *= room_head / head.sum()
    if tail.sum() > room_tail:
        tail *= room_tail / tail.sum()
    before = j_off - np.cumsum(head[::-1])
    after = j_off + np.cumsum(tail)
    return [*before[::-1], j_off, *after]


def _draw_subject_template(rng, j_range=_J_OFFSET_RANGE) -> MorphologyTemplate:
    base = default_template()
    for _ in range(500):
        offsets = _draw_offsets(rng, base, j_range)
        defl = []
        for d, off in zip(base.deflections, offsets):
            # lognormal amplitude scale: keeps each deflection's sign, so
            # the J-dominant / I,K-trough structure survives the draw
            amp_std = _J_AMP_SCALE_STD if d.label == "J" else _AMP_SCALE_STD
            amp = d.amplitude * float(np.exp(amp_std * rng.standard_normal()))
            width = d.width * float(np.exp(_WIDTH_SCALE_STD * rng.standard_normal()))
            # the floor keeps bump spectra inside the analysis bands (below
            # ~20 ms a bump leaks real energy above 25 Hz) and keeps beat
            # shapes tolerant of the ~1-2 sample timing wander that any
            # beat-locked reference accumulates between re-alignments
            width = float(np.clip(width, *_WIDTH_RANGE))
            defl.append(Deflection(d.label, float(off), amp, width))
        # re-balance bump areas to zero after the amplitude draw so each
        # subject's cycle still carries no net velocity change
        pos_area = sum(d.amplitude * d.width for d in defl if d.amplitude > 0)
        neg_area = -sum(d.amplitude * d.width for d in defl if d.amplitude < 0)
        if neg_area <= 0:
            continue
        balance = pos_area / neg_area
        if not 0.45 <= balance <= 2.2:
            continue
        for d in defl:
            if d.amplitude < 0:
                d.amplitude *= balance
        amps = {d.label: d.amplitude for d in defl}
        j_dominant = amps["J"] > max(v for k, v in amps.items() if k != "J")
        # cap per-cycle energy (sum a^2*w tracks the integral of the
        # squared pulse train); the amplitude draw plus area re-balance
        # can otherwise compound into implausibly strong beats
        energy_ok = sum(d.amplitude**2 * d.width for d in defl) <= 0.013
        if j_dominant and energy_ok:
            tpl = MorphologyTemplate(defl)
            tpl.validate()
            return tpl
    raise RuntimeError("template rejection sampling failed; dispersion bounds too tight")


def make_cohort(
    n_subjects: int,
    duration_per_subject: float,
    fs: float,
    noise: NoiseSpec | None = None,
    seed: int = 0,
) -> list[tuple[SubjectProfile, SignalSegment]]:
    """Draw n_subjects synthetic individuals and record each one."""
    if n_subjects < 2:
        raise ValueError(f"a cohort needs at least 2 subjects, got {n_subjects}")
    noise = noise or NoiseSpec()
    root = np.random.SeedSequence(seed)
    children = root.spawn(n_subjects + 1)
    # stratify the J-peak window across subjects: a cohort of iid draws
    # can land several J peaks within a bump width of each other, which
    # makes those subjects' beat shapes collide
    slots = np.linspace(*_J_OFFSET_RANGE, n_subjects + 1)
    perm = np.random.default_rng(children[-1]).permutation(n_subjects)
    cohort = []
    for i, child in enumerate(children[:n_subjects]):
        rng = np.random.default_rng(child)
        template = _draw_subject_template(rng, (slots[perm[i]], slots[perm[i] + 1]))
        profile = SubjectProfile(
            subject_id=f"S{i:03d}",
            template=template,
            # resting rates that keep the cardiac fundamental above the
            # slowest analysis band, so the beat line itself never leaks
            # into the sway/respiration region that denoising discards
            hr_mean=float(rng.uniform(66.0, 76.0)),
            hr_jitter=float(rng.uniform(0.004, 0.010)),
            amp_jitter=float(rng.uniform(0.05, 0.12)),
            rng_seed=int(rng.integers(0, 2**31 - 1)),
        )
        seg = synth_recording(profile, duration_per_subject, fs, noise)
        cohort.append((profile, seg))
    return cohort


def save_cohort(directory, cohort, noise: NoiseSpec | None = None) -> None:
    """Write per-subject CSVs plus a JSON manifest mapping id -> file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"subjects": []}
    if noise is not None:
        manifest["noise"] = noise.to_dict()
    for profile, seg in cohort:
        fname = f"{profile.subject_id}.csv"
        write_signal_csv(directory / fname, seg)
        manifest["subjects"].append(
            {"subject_id": profile.subject_id, "signal": fname, "profile": profile.to_dict()}
        )
    (directory / "cohort.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_cohort(directory) -> list[tuple[SubjectProfile, SignalSegment]]:
    directory = Path(directory)
    manifest = json.loads((directory / "cohort.json").read_text())
    cohort = []
    for entry in manifest["subjects"]:
        profile = SubjectProfile.from_dict(entry["profile"])
        seg = read_signal_csv(directory / entry["signal"])
        cohort.append((profile, seg))
    return cohort
