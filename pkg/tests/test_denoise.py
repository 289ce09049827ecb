"""Band selection, noise thresholding, hyperbolic shrinkage, full pipeline."""

import numpy as np
import pytest

from earbcg.core import SignalSegment
from earbcg.denoise import (
    ShrinkConfig,
    band_select,
    denoise_inherent,
    hyperbolic_shrink,
    noise_threshold,
)
from earbcg.synth import NoiseSpec, SubjectProfile, default_template, synth_recording
from earbcg.wavelet import swt_decompose, swt_reconstruct


def bcg_profile(seed=0, hr_jitter=0.0, amp_jitter=0.0):
    return SubjectProfile(
        subject_id="t",
        template=default_template(),
        hr_mean=60.0,
        hr_jitter=hr_jitter,
        amp_jitter=amp_jitter,
        rng_seed=seed,
    )


class TestShrinkConfig:
    def test_exponent_range_enforced(self):
        with pytest.raises(ValueError, match="p must be"):
            ShrinkConfig(p=2.5)
        with pytest.raises(ValueError, match="p must be"):
            ShrinkConfig(p=0.5)

    def test_drop_levels_range_enforced(self):
        with pytest.raises(ValueError, match="drop_levels"):
            ShrinkConfig(drop_levels={0, 7})


class TestBandSelect:
    def test_default_zeroes_d1_and_approx(self):
        rng = np.random.default_rng(0)
        dec = swt_decompose(SignalSegment(rng.standard_normal(256), 100.0))
        out = band_select(dec)
        assert np.all(out.details[0] == 0)
        assert np.all(out.approx == 0)
        for j in range(1, 6):
            assert np.array_equal(out.details[j], dec.details[j])

    def test_empty_drop_set_is_identity(self):
        rng = np.random.default_rng(1)
        dec = swt_decompose(SignalSegment(rng.standard_normal(256), 100.0))
        out = band_select(dec, ShrinkConfig(drop_levels=frozenset(), drop_approx=False))
        for j in range(6):
            assert np.array_equal(out.details[j], dec.details[j])
        assert np.array_equal(out.approx, dec.approx)

    def test_respiratory_band_rejection(self):
        # a 0.25 Hz sinusoid lives almost entirely in the approximation
        t = np.arange(4096) / 100.0
        seg = SignalSegment(np.sin(2 * np.pi * 0.25 * t), 100.0)
        out = swt_reconstruct(band_select(swt_decompose(seg)))
        rms_in = np.sqrt(np.mean(seg.samples**2))
        rms_out = np.sqrt(np.mean(out.samples**2))
        assert rms_out < 0.10 * rms_in


class TestNoiseThreshold:
    def test_mad_inversion(self):
        w = np.array([0.6745, -0.6745, 0.6745, -0.6745])
        sigma, T = noise_threshold(w)
        assert sigma == pytest.approx(1.0)
        assert T == pytest.approx(np.sqrt(2.0 * np.log(4)))

    def test_universal_threshold_formula(self):
        # sigma=1, n=100 -> T = sqrt(2 ln 100)
        w = np.full(100, 0.6745)
        w[::2] *= -1
        sigma, T = noise_threshold(w)
        assert sigma == pytest.approx(1.0)
        assert T == pytest.approx(3.03485, abs=1e-4)

    def test_gaussian_consistency(self):
        # Monte-Carlo: MAD-based estimate recovers sigma_true=2 within 5%
        rng = np.random.default_rng(7)
        estimates = [noise_threshold(rng.normal(0, 2.0, 10_000))[0] for _ in range(100)]
        assert np.mean(estimates) == pytest.approx(2.0, abs=0.1)
        assert all(1.9 <= e <= 2.1 for e in estimates)

    def test_all_zero_is_degenerate_not_error(self):
        sigma, T = noise_threshold(np.zeros(50))
        assert sigma == 0.0
        assert T == 0.0

    def test_threshold_monotone_in_sigma_and_n(self):
        rng = np.random.default_rng(9)
        base = np.abs(rng.standard_normal(1000)) + 0.1
        _, t_small = noise_threshold(base)
        _, t_big_sigma = noise_threshold(base * 2.0)
        _, t_big_n = noise_threshold(np.tile(base, 4))
        assert t_big_sigma > t_small
        assert t_big_n > t_small

    def test_too_few_coefficients_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            noise_threshold(np.array([1.0]))


class TestHyperbolicShrink:
    def test_zero_fixed_point(self):
        out = hyperbolic_shrink(np.zeros(10), 1.0, 1.5)
        assert np.all(out == 0)

    def test_large_coefficients_pass_through(self):
        # |w|/T = 5 with p=2: attenuation 1 - e^-25, i.e. essentially none
        w = np.array([5.0, -5.0])
        out = hyperbolic_shrink(w, 1.0, 2.0)
        assert np.max(np.abs(out - w) / np.abs(w)) < 2e-11

    def test_at_threshold_value(self):
        # |w| = T with p=1 shrinks by exactly 1 - 1/e
        out = hyperbolic_shrink(np.array([2.0]), 2.0, 1.0)
        assert out[0] == pytest.approx(2.0 * (1.0 - np.exp(-1.0)))

    def test_contraction_and_sign_preservation(self):
        rng = np.random.default_rng(11)
        for p in (1.0, 1.5, 2.0):
            w = rng.standard_normal(500) * 3.0
            out = hyperbolic_shrink(w, 0.8, p)
            assert np.all(np.abs(out) <= np.abs(w) + 1e-15)
            nz = w != 0
            assert np.all(np.sign(out[nz]) == np.sign(w[nz]))

    def test_monotone_in_magnitude(self):
        w = np.linspace(0.0, 10.0, 2001)
        out = hyperbolic_shrink(w, 1.0, 1.5)
        assert np.all(np.diff(out) >= -1e-15)

    def test_zero_threshold_passes_through(self):
        w = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(hyperbolic_shrink(w, 0.0, 1.5), w)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            hyperbolic_shrink(np.ones(4), -1.0, 1.5)


class TestDenoiseInherent:
    def test_clean_signal_survives(self):
        # denoiser must not destroy a noise-free recording
        seg = synth_recording(bcg_profile(), 8.0, 100.0, NoiseSpec())
        out = denoise_inherent(seg)
        assert out.samples.size == seg.samples.size
        c = np.corrcoef(out.samples, seg.samples)[0, 1]
        assert c >= 0.99

    def test_snr_improvement_at_published_noise_level(self):
        # sensor noise at the published background variance: the pipeline
        # must buy at least 6 dB against the known clean signal
        clean = synth_recording(bcg_profile(seed=3), 8.0, 100.0, NoiseSpec())
        rng = np.random.default_rng(13)
        noisy = SignalSegment(
            clean.samples + rng.normal(0.0, np.sqrt(0.041), clean.samples.size), 100.0
        )
        out = denoise_inherent(noisy)

        def snr(x):
            return 10.0 * np.log10(
                np.sum(clean.samples**2) / np.sum((x - clean.samples) ** 2)
            )

        assert snr(out.samples) - snr(noisy.samples) >= 6.0

    def test_pure_noise_mostly_removed(self):
        rng = np.random.default_rng(17)
        seg = SignalSegment(rng.normal(0.0, 0.2, 4096), 100.0)
        out = denoise_inherent(seg)
        assert np.sum(out.samples**2) <= 0.25 * np.sum(seg.samples**2)

    def test_too_short_input_rejected(self):
        with pytest.raises(ValueError, match="at least 64"):
            denoise_inherent(SignalSegment(np.ones(32), 100.0))
