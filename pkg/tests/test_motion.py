"""Periodicity detection, adaptive forgetting, RLS recovery."""

import numpy as np
import pytest

from earbcg.core import SignalSegment
from earbcg.motion import (
    MotionConfig,
    RlsConfig,
    RlsState,
    denoise_sporadic,
    detect_peaks,
    fluctuation_ratio,
    forgetting_factor,
    periodicity,
    rls_step,
    zscore,
)
from earbcg.synth import (
    SporadicEventSpec,
    SubjectProfile,
    default_template,
    inject_event,
    make_cohort,
    synth_recording,
)


def steady_profile(seed=11):
    return SubjectProfile(
        subject_id="t",
        template=default_template(),
        hr_mean=60.0,
        hr_jitter=0.0,
        amp_jitter=0.0,
        rng_seed=seed,
    )


def shake_case(seed=200):
    """First subject of the frozen recovery cohort: 4 s reference,
    8 s target with a 2.5 s oscillation burst in the middle."""
    prof, full = make_cohort(10, 12.0, 100.0, None, seed=seed)[0]
    ref = SignalSegment(full.samples[:400], 100.0)
    clean = SignalSegment(full.samples[400:1200], 100.0)
    shaken = inject_event(
        clean,
        SporadicEventSpec("shake_oscillation", 3.5, 2.5, 0.7),
        seed=prof.rng_seed + 7,
    )
    return ref, clean, shaken


def pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))


class TestZscore:
    def test_three_point_example(self):
        out = zscore(SignalSegment(np.array([1.0, 2.0, 3.0]), 100.0))
        assert np.allclose(out.samples, [-1.0, 0.0, 1.0])

    def test_mean_zero_std_one(self):
        rng = np.random.default_rng(0)
        out = zscore(SignalSegment(rng.standard_normal(500) * 3 + 2, 100.0))
        assert abs(out.samples.mean()) < 1e-9
        assert abs(np.std(out.samples, ddof=1) - 1.0) < 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        seg = SignalSegment(rng.standard_normal(300), 100.0)
        once = zscore(seg)
        twice = zscore(once)
        assert np.allclose(twice.samples, once.samples, atol=1e-9)

    def test_affine_invariant(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(300)
        a = zscore(SignalSegment(x, 100.0))
        b = zscore(SignalSegment(2.5 * x - 7.0, 100.0))
        assert np.allclose(a.samples, b.samples, atol=1e-9)

    def test_constant_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            zscore(SignalSegment(np.ones(64), 100.0))


class TestDetectPeaks:
    def test_min_spacing_from_hr_max(self):
        # fs=100, hr_max=120 -> shortest beat interval is 50 samples;
        # two candidates 50 apart conflict and the taller one wins
        x = np.zeros(200)
        x[60] = 1.0
        x[110] = 0.8
        idx, amps = detect_peaks(SignalSegment(x, 100.0))
        assert list(idx) == [60]

    def test_j_peaks_on_steady_recording(self):
        rec = synth_recording(steady_profile(), 4.0, 100.0)
        idx, amps = detect_peaks(zscore(rec))
        assert idx.size == 4
        # template J offset is 0.26 s; beats start at whole seconds
        for k, i in enumerate(idx):
            assert abs(int(i) - (100 * k + 26)) <= 2
        assert np.all(amps > 0)

    def test_flat_signal_no_peaks(self):
        idx, amps = detect_peaks(SignalSegment(np.zeros(400), 100.0))
        assert idx.size == 0
        assert amps.size == 0

    def test_spacing_property_on_noise(self):
        cfg = MotionConfig()
        d_min = int(np.floor(100.0 * 60.0 / cfg.hr_max))
        for seed in range(5):
            rng = np.random.default_rng(seed)
            seg = zscore(SignalSegment(rng.standard_normal(1000), 100.0))
            idx, _ = detect_peaks(seg, cfg)
            if idx.size >= 2:
                assert np.diff(idx).min() > d_min


class TestPeriodicity:
    def test_steady_recording_is_periodic(self):
        rep = periodicity(synth_recording(steady_profile(), 4.0, 100.0))
        assert rep.is_periodic
        assert rep.cv_interval < 0.02
        assert rep.cv_amp < 0.05

    def test_unsteady_amplitudes_rejected(self):
        # steady spacing but 1/3 alternating heights: cv_amp = 0.548
        x = np.zeros(600)
        for k, i in enumerate(range(30, 600, 80)):
            x[i] = 1.0 if k % 2 == 0 else 3.0
        rep = periodicity(SignalSegment(x, 100.0))
        assert rep.cv_interval < 0.1
        assert rep.cv_amp > 0.2
        assert not rep.is_periodic

    def test_two_peaks_never_periodic(self):
        x = np.zeros(300)
        x[60] = x[200] = 1.0
        rep = periodicity(SignalSegment(x, 100.0))
        assert rep.peak_indices.size == 2
        assert not rep.is_periodic

    def test_constant_segment_non_periodic(self):
        rep = periodicity(SignalSegment(np.zeros(200), 100.0))
        assert not rep.is_periodic
        assert rep.peak_indices.size == 0

    def test_report_round_trips_to_dict(self):
        rep = periodicity(synth_recording(steady_profile(), 4.0, 100.0))
        d = rep.to_dict()
        assert d["is_periodic"] is True
        assert len(d["peak_indices"]) == len(rep.peak_indices)


class TestFluctuationRatio:
    def test_identical_windows_give_one(self):
        rng = np.random.default_rng(4)
        w = rng.standard_normal(100)
        assert fluctuation_ratio(w, w) == pytest.approx(1.0)

    def test_std_homogeneity(self):
        rng = np.random.default_rng(5)
        w = rng.standard_normal(100)
        assert fluctuation_ratio(3.0 * w, w) == pytest.approx(3.0)

    def test_flat_reference_floored(self):
        x = np.array([0.0, 1.0, -1.0, 0.5])
        psi = fluctuation_ratio(x, np.zeros(4))
        assert psi == pytest.approx(float(np.std(x)) / 1e-8)


class TestForgettingFactor:
    def test_zero_psi_hits_upper_bound(self):
        assert forgetting_factor(0.0, 0.05, (0.9, 0.9999)) == pytest.approx(0.9999)

    def test_large_product_clamps_low(self):
        # e^-1 = 0.3679 is below the floor
        assert forgetting_factor(1.0, 1.0, (0.9, 0.9999)) == pytest.approx(0.9)

    def test_unclamped_value(self):
        assert forgetting_factor(1.0, 0.01, (0.9, 0.9999)) == pytest.approx(
            0.990050, abs=1e-6
        )

    def test_monotone_in_psi(self):
        alphas = [forgetting_factor(psi, 0.05, (0.9, 0.9999)) for psi in np.linspace(0, 10, 50)]
        assert all(a >= b for a, b in zip(alphas, alphas[1:]))

    def test_nonpositive_kappa_rejected(self):
        with pytest.raises(ValueError, match="kappa"):
            forgetting_factor(1.0, 0.0, (0.9, 0.9999))


class TestRlsStep:
    def test_hand_evaluated_scalar_update(self):
        st = RlsState(
            weights=np.zeros(1),
            inv_corr=np.eye(1),
            order=1,
            kappa=0.05,
            alpha_bounds=(0.9, 0.9999),
        )
        st, y, e = rls_step(st, np.array([1.0]), 1.0, 1.0)
        assert y == pytest.approx(0.0)
        assert e == pytest.approx(1.0)
        assert st.weights[0] == pytest.approx(0.5)
        assert st.inv_corr[0, 0] == pytest.approx(0.5)

    def test_zero_innovation_keeps_weights(self):
        st = RlsState.fresh(RlsConfig(order=3))
        st.weights = np.array([0.2, -0.1, 0.4])
        u = np.array([1.0, 2.0, -1.0])
        d = float(st.weights @ u)
        before = st.weights.copy()
        st, y, e = rls_step(st, u, d, 0.99)
        assert e == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(st.weights, before)

    def test_converges_to_true_weights(self):
        rng = np.random.default_rng(3)
        w_true = np.array([0.7, -0.3, 0.2])
        st = RlsState.fresh(RlsConfig(order=3))
        errs = []
        for _ in range(200):
            u = rng.standard_normal(3)
            d = float(w_true @ u) + 1e-4 * rng.standard_normal()
            st, _, _ = rls_step(st, u, d, 0.999)
            errs.append(float(np.linalg.norm(st.weights - w_true)))
        assert errs[50] < errs[5] < errs[0]
        assert errs[-1] < 1e-3

    def test_inv_corr_stays_positive_definite(self):
        st = RlsState.fresh(RlsConfig(order=4))
        rng = np.random.default_rng(7)
        for i in range(10_000):
            u = rng.standard_normal(4)
            alpha = float(rng.uniform(0.9, 0.9999))
            st, _, _ = rls_step(st, u, float(rng.standard_normal()), alpha)
            if i % 1000 == 0:
                assert np.linalg.eigvalsh(st.inv_corr).min() > 0
        assert np.linalg.eigvalsh(st.inv_corr).min() > 0
        assert np.allclose(st.inv_corr, st.inv_corr.T)

    def test_non_finite_update_raises(self):
        st = RlsState.fresh(RlsConfig(order=2))
        with np.errstate(invalid="ignore"), pytest.raises(
            FloatingPointError, match="non-finite"
        ):
            rls_step(st, np.array([np.inf, 1.0]), 1.0, 0.99)


class TestDenoiseSporadic:
    def test_periodic_input_returned_unchanged(self):
        rec = synth_recording(steady_profile(), 4.0, 100.0)
        ref = synth_recording(steady_profile(seed=12), 4.0, 100.0)
        out = denoise_sporadic(rec, ref)
        assert np.array_equal(out.samples, rec.samples)
        assert out.samples is not rec.samples

    def test_missing_reference_rejected(self):
        rec = synth_recording(steady_profile(), 4.0, 100.0)
        with pytest.raises(ValueError, match="reference"):
            denoise_sporadic(rec, None)

    def test_fs_mismatch_rejected(self):
        rec = synth_recording(steady_profile(), 4.0, 100.0)
        ref = synth_recording(steady_profile(seed=12), 4.0, 50.0)
        with pytest.raises(ValueError, match="fs"):
            denoise_sporadic(rec, ref)

    def test_shake_recovery(self):
        ref, clean, shaken = shake_case()
        assert not periodicity(shaken).is_periodic
        out = denoise_sporadic(shaken, ref)
        assert pearson(shaken.samples, clean.samples) <= 0.6
        assert pearson(out.samples, clean.samples) >= 0.9

    def test_gating_idempotence(self):
        ref, _, shaken = shake_case()
        out = denoise_sporadic(shaken, ref)
        assert periodicity(out).is_periodic
        again = denoise_sporadic(out, ref)
        assert np.array_equal(again.samples, out.samples)

    def test_removal_stays_non_periodic(self):
        ref, clean, _ = shake_case()
        removed = inject_event(
            clean,
            SporadicEventSpec("removal_flatline", 3.5, 2.5, 0.05),
            seed=13,
        )
        out = denoise_sporadic(removed, ref)
        assert not periodicity(out).is_periodic
