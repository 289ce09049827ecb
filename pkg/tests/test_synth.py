"""Synthetic BCG generator: cycle shape, recordings, events, cohorts."""

import numpy as np
import pytest

from earbcg.core import SignalSegment
from earbcg.synth import (
    Deflection,
    MorphologyTemplate,
    NoiseSpec,
    SporadicEventSpec,
    SubjectProfile,
    default_template,
    inject_event,
    load_cohort,
    make_cohort,
    save_cohort,
    synth_cycle,
    synth_recording,
)


def zero_template():
    tpl = default_template()
    for d in tpl.deflections:
        d.amplitude = 0.0
    return tpl


def isolated_j_template():
    """Default offsets but widths far below the inter-deflection gaps."""
    tpl = default_template()
    for d in tpl.deflections:
        d.width = 0.008
    return tpl


class TestSynthCycle:
    def test_length_is_round_period_times_fs(self):
        seg = synth_cycle(default_template(), 1.0, 100.0)
        assert seg.samples.size == 100
        assert seg.fs == 100.0

    def test_zero_amplitudes_render_silence(self):
        seg = synth_cycle(zero_template(), 1.0, 100.0)
        assert np.all(seg.samples == 0.0)

    def test_isolated_j_peak_amplitude(self):
        # with bumps much narrower than the gaps, the J deflection is the
        # global maximum at its published 0.483 m/s^2 amplitude
        seg = synth_cycle(isolated_j_template(), 1.0, 1000.0)
        assert np.max(seg.samples) == pytest.approx(0.483, rel=0.01)

    def test_offset_beyond_period_rejected(self):
        with pytest.raises(ValueError, match="offset"):
            synth_cycle(default_template(), 0.5, 100.0)

    def test_undersampling_rejected(self):
        with pytest.raises(ValueError, match="undersample"):
            synth_cycle(default_template(), 1.0, 5.0)

    def test_wrong_deflection_count_rejected(self):
        tpl = default_template()
        tpl.deflections = tpl.deflections[:6]
        with pytest.raises(ValueError, match="7 deflections"):
            synth_cycle(tpl, 1.0, 100.0)

    def test_nonincreasing_offsets_rejected(self):
        tpl = default_template()
        tpl.deflections[1].offset = tpl.deflections[0].offset
        with pytest.raises(ValueError, match="increasing"):
            synth_cycle(tpl, 1.0, 100.0)

    def test_sign_flips_rejected(self):
        tpl = default_template()
        tpl.deflections[2].amplitude = -0.1  # J must not be negative
        with pytest.raises(ValueError, match="J"):
            synth_cycle(tpl, 1.0, 100.0)
        tpl = default_template()
        tpl.deflections[1].amplitude = +0.2  # I must not be positive
        with pytest.raises(ValueError, match="I and K"):
            synth_cycle(tpl, 1.0, 100.0)

    def test_value_at_deflection_offsets(self):
        # rendered value at each fiducial equals the sum of overlapping
        # bump contributions there, within 5%
        tpl = default_template()
        seg = synth_cycle(tpl, 1.0, 100.0)
        for d in tpl.deflections:
            idx = int(round(d.offset * 100.0))
            expected = sum(
                e.amplitude * np.exp(-((d.offset - e.offset) ** 2) / (2 * e.width**2))
                for e in tpl.deflections
            )
            assert seg.samples[idx] == pytest.approx(expected, rel=0.05)

    def test_energy_locality(self):
        # with zero noise, >= 99% of energy lies within offset +/- 3 width
        tpl = default_template()
        seg = synth_cycle(tpl, 1.0, 200.0)
        t = seg.times
        mask = np.zeros(t.size, dtype=bool)
        for d in tpl.deflections:
            mask |= np.abs(t - d.offset) <= 3.0 * d.width
        total = np.sum(seg.samples**2)
        assert np.sum(seg.samples[mask] ** 2) >= 0.99 * total


def quiet_profile(**kw):
    args = dict(
        subject_id="demo",
        template=default_template(),
        hr_mean=60.0,
        hr_jitter=0.0,
        amp_jitter=0.0,
        rng_seed=7,
    )
    args.update(kw)
    return SubjectProfile(**args)


class TestSynthRecording:
    def test_jitter_free_recording_repeats_one_cycle(self):
        seg = synth_recording(quiet_profile(), 4.0, 100.0, NoiseSpec())
        assert seg.samples.size == 400
        cycle = seg.samples[:100]
        for k in range(1, 4):
            assert np.array_equal(seg.samples[100 * k : 100 * (k + 1)], cycle)

    def test_background_noise_variance(self):
        # signal-free recording at the published background variance
        noise = NoiseSpec(sensor_sigma=float(np.sqrt(0.041)))
        profile = quiet_profile(template=zero_template())
        seg = synth_recording(profile, 60.0, 100.0, noise)
        assert np.var(seg.samples) == pytest.approx(0.041, rel=0.10)

    def test_deterministic_under_seed(self):
        profile = quiet_profile(hr_jitter=0.05, amp_jitter=0.1)
        noise = NoiseSpec(sensor_sigma=0.2, resp_amplitude=0.1)
        a = synth_recording(profile, 8.0, 100.0, noise)
        b = synth_recording(profile, 8.0, 100.0, noise)
        assert np.array_equal(a.samples, b.samples)

    def test_too_short_duration_rejected(self):
        with pytest.raises(ValueError, match="shorter than one cardiac period"):
            synth_recording(quiet_profile(), 0.5, 100.0, NoiseSpec())

    def test_profile_bounds_enforced(self):
        with pytest.raises(ValueError, match="hr_mean"):
            synth_recording(quiet_profile(hr_mean=150.0), 4.0, 100.0)
        with pytest.raises(ValueError, match="hr_jitter"):
            synth_recording(quiet_profile(hr_jitter=0.5), 4.0, 100.0)

    def test_added_noise_raises_variance_additively(self):
        # Parseval sanity: independent Gaussian noise of variance v raises
        # sample variance by v within 15% on 4 s windows
        profile = quiet_profile(hr_jitter=0.03, amp_jitter=0.05)
        clean = synth_recording(profile, 4.0, 100.0, NoiseSpec())
        v = 0.05
        rng = np.random.default_rng(3)
        deltas = []
        for _ in range(200):
            noisy = clean.samples + rng.normal(0.0, np.sqrt(v), clean.samples.size)
            deltas.append(np.var(noisy) - np.var(clean.samples))
        assert np.mean(deltas) == pytest.approx(v, rel=0.15)


class TestInjectEvent:
    def setup_method(self):
        self.seg = synth_recording(quiet_profile(), 4.0, 100.0, NoiseSpec())

    def test_zero_magnitude_is_identity(self):
        for kind in SporadicEventSpec.KINDS:
            ev = SporadicEventSpec(kind, 1.0, 1.0, 0.0)
            out = inject_event(self.seg, ev, seed=0)
            assert np.array_equal(out.samples, self.seg.samples)

    def test_removal_flatline_erases_cardiac_shape(self):
        ev = SporadicEventSpec("removal_flatline", 0.0, 4.0, float(np.sqrt(0.041)))
        out = inject_event(self.seg, ev, seed=1)
        c = np.corrcoef(out.samples, self.seg.samples)[0, 1]
        assert abs(c) < 0.2

    def test_shake_raises_window_std(self):
        ev = SporadicEventSpec("shake_oscillation", 1.0, 1.0, 10 * 0.483)
        out = inject_event(self.seg, ev, seed=2)
        std_in = np.std(out.samples[100:200])
        std_out = np.std(out.samples[0:100])
        assert std_in >= 5.0 * std_out

    def test_samples_outside_window_unchanged(self):
        for kind in SporadicEventSpec.KINDS:
            ev = SporadicEventSpec(kind, 1.0, 1.0, 1.0)
            out = inject_event(self.seg, ev, seed=3)
            assert np.array_equal(out.samples[:100], self.seg.samples[:100])
            assert np.array_equal(out.samples[200:], self.seg.samples[200:])

    def test_spike_burst_is_heavy_tailed(self):
        ev = SporadicEventSpec("spike_burst", 0.0, 4.0, 2.0)
        out = inject_event(self.seg, ev, seed=4)
        delta = out.samples - self.seg.samples
        assert np.count_nonzero(delta) >= 1
        assert np.max(np.abs(delta)) > 1.0

    def test_out_of_bounds_window_rejected(self):
        ev = SporadicEventSpec("spike_burst", 3.5, 1.0, 1.0)
        with pytest.raises(ValueError, match="window"):
            inject_event(self.seg, ev, seed=0)

    def test_unknown_kind_rejected(self):
        ev = SporadicEventSpec("teleport", 0.0, 1.0, 1.0)
        with pytest.raises(ValueError, match="kind"):
            inject_event(self.seg, ev, seed=0)


class TestMakeCohort:
    def test_paper_scale_cohort_shapes(self):
        cohort = make_cohort(33, 960.0, 100.0, NoiseSpec(), seed=0)
        assert len(cohort) == 33
        assert all(seg.samples.size == 96_000 for _, seg in cohort)

    def test_deterministic(self):
        a = make_cohort(2, 4.0, 100.0, NoiseSpec(sensor_sigma=0.1), seed=5)
        b = make_cohort(2, 4.0, 100.0, NoiseSpec(sensor_sigma=0.1), seed=5)
        for (pa, sa), (pb, sb) in zip(a, b):
            assert pa == pb
            assert np.array_equal(sa.samples, sb.samples)

    def test_minimum_cohort_size(self):
        with pytest.raises(ValueError, match="at least 2"):
            make_cohort(1, 4.0, 100.0, NoiseSpec(), seed=0)

    def test_inter_subject_decorrelation(self):
        # pairwise Pearson between rendered subject templates: near-zero
        # mean, median magnitude under 0.3
        for seed in (0, 1, 2):
            cohort = make_cohort(12, 4.0, 100.0, NoiseSpec(), seed=seed)
            cycles = [synth_cycle(p.template, 1.0, 100.0).samples for p, _ in cohort]
            corrs = []
            for i in range(len(cycles)):
                for j in range(i + 1, len(cycles)):
                    corrs.append(np.corrcoef(cycles[i], cycles[j])[0, 1])
            corrs = np.asarray(corrs)
            assert abs(corrs.mean()) < 0.2
            assert np.median(np.abs(corrs)) < 0.3

    def test_intra_subject_template_stability(self):
        # the same subject's beats share one template, so re-rendered
        # cycles stay highly correlated
        cohort = make_cohort(4, 4.0, 100.0, NoiseSpec(), seed=1)
        for profile, _ in cohort:
            a = synth_cycle(profile.template, 1.0, 100.0).samples
            b = synth_cycle(profile.template, 1.05, 100.0).samples[:100]
            assert np.corrcoef(a, b)[0, 1] >= 0.8

    def test_inter_subject_interval_dispersion_dominates_intra(self):
        # identity lives in the fiducial geometry: J-H/J-I/J-L interval
        # spread across subjects must dwarf any within-subject spread
        # (beats of one subject share a template, so intra spread is 0)
        cohort = make_cohort(12, 4.0, 100.0, NoiseSpec(), seed=3)

        def interval(p, a, b):
            return p.template[b].offset - p.template[a].offset

        for a, b in (("H", "J"), ("I", "J"), ("J", "L")):
            inter_std = np.std([interval(p, a, b) for p, _ in cohort])
            intra_std = 0.0  # template is per-subject constant
            assert inter_std >= 3.0 * intra_std
            assert 0.010 <= inter_std <= 0.060

    def test_manifest_round_trip(self, tmp_path):
        cohort = make_cohort(3, 4.0, 100.0, NoiseSpec(sensor_sigma=0.1), seed=9)
        save_cohort(tmp_path, cohort)
        back = load_cohort(tmp_path)
        assert len(back) == 3
        for (pa, sa), (pb, sb) in zip(cohort, back):
            assert pa.subject_id == pb.subject_id
            assert pa.hr_mean == pb.hr_mean
            assert [d.offset for d in pa.template.deflections] == [
                d.offset for d in pb.template.deflections
            ]
            assert np.array_equal(sa.samples, sb.samples)
