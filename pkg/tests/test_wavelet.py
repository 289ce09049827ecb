"""Stationary wavelet transform: filter bank and round-trip properties."""

import numpy as np
import pytest

from earbcg.core import SignalSegment
from earbcg.wavelet import (
    SwtDecomposition,
    WaveletBank,
    level_band,
    level_energies,
    meyer_bank,
    swt_decompose,
    swt_reconstruct,
)


class TestMeyerBank:
    def test_taps_even_and_symmetric(self):
        bank = meyer_bank()
        assert bank.lowpass.size == 62
        assert np.array_equal(bank.lowpass, bank.lowpass[::-1])

    def test_lowpass_dc_gain(self):
        # refinement filter normalization: sum h = sqrt(2)
        bank = meyer_bank()
        assert bank.lowpass.sum() == pytest.approx(np.sqrt(2.0), abs=1e-4)

    def test_quadrature_mirror_relation(self):
        bank = meyer_bank()
        L = bank.lowpass.size
        qmf = ((-1.0) ** np.arange(L)) * bank.lowpass[::-1]
        assert np.allclose(bank.highpass, qmf, atol=1e-12)

    def test_orthonormal_shifts(self):
        h = meyer_bank().lowpass
        assert np.dot(h, h) == pytest.approx(1.0, abs=1e-6)
        for k in (1, 2, 3):
            lag = np.dot(h[2 * k:], h[: h.size - 2 * k])
            assert abs(lag) < 1e-6

    def test_mismatched_pair_rejected(self):
        h = meyer_bank().lowpass
        with pytest.raises(ValueError, match="quadrature mirror"):
            WaveletBank(h, np.roll(h, 1))


class TestDecompose:
    def test_zero_input_gives_zero_decomposition(self):
        dec = swt_decompose(SignalSegment(np.zeros(256), 100.0))
        assert all(np.all(d == 0) for d in dec.details)
        assert np.all(dec.approx == 0)

    def test_levels_keep_input_length(self):
        dec = swt_decompose(SignalSegment(np.ones(256), 100.0), levels=6)
        assert all(d.size == 256 for d in dec.details)
        assert dec.approx.size == 256

    def test_pads_to_multiple_of_block(self):
        dec = swt_decompose(SignalSegment(np.ones(300), 100.0), levels=6)
        assert dec.n_orig == 300
        assert dec.approx.size == 320  # next multiple of 64

    def test_nonfinite_rejected(self):
        seg = SignalSegment(np.ones(64), 100.0)
        seg.samples[3] = np.inf  # bypass constructor check deliberately
        with pytest.raises(ValueError, match="non-finite"):
            swt_decompose(seg)

    def test_25hz_energy_lands_in_top_two_levels(self):
        t = np.arange(4096) / 100.0
        dec = swt_decompose(SignalSegment(np.sin(2 * np.pi * 25.0 * t), 100.0))
        e = level_energies(dec)
        detail_total = sum(e[f"D{j}"] for j in range(1, 7))
        assert (e["D1"] + e["D2"]) / detail_total >= 0.80

    def test_nominal_bands(self):
        assert level_band(100.0, 1) == (25.0, 50.0)
        assert level_band(100.0, 6) == (0.78125, 1.5625)


class TestRoundTrip:
    def test_impulse_recovery(self):
        x = np.zeros(256)
        x[100] = 1.0
        seg = SignalSegment(x, 100.0)
        back = swt_reconstruct(swt_decompose(seg))
        assert np.max(np.abs(back.samples - x)) < 1e-6

    def test_white_noise_round_trip(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(4096)
        back = swt_reconstruct(swt_decompose(SignalSegment(x, 100.0)))
        assert np.max(np.abs(back.samples - x)) < 1e-6

    def test_round_trip_with_padding(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(777)  # not a multiple of 64
        back = swt_reconstruct(swt_decompose(SignalSegment(x, 100.0)))
        assert back.samples.size == 777
        assert np.max(np.abs(back.samples - x)) < 1e-6

    def test_linearity(self):
        rng = np.random.default_rng(2)
        x1, x2 = rng.standard_normal((2, 512))
        a, b = 2.5, -1.25
        d1 = swt_decompose(SignalSegment(x1, 100.0))
        d2 = swt_decompose(SignalSegment(x2, 100.0))
        mixed = d1.copy()
        for j in range(6):
            mixed.details[j] = a * d1.details[j] + b * d2.details[j]
        mixed.approx = a * d1.approx + b * d2.approx
        out = swt_reconstruct(mixed).samples
        assert np.max(np.abs(out - (a * x1 + b * x2))) < 1e-6

    def test_all_zero_decomposition_reconstructs_zero(self):
        dec = swt_decompose(SignalSegment(np.zeros(128), 100.0))
        out = swt_reconstruct(dec)
        assert np.all(out.samples == 0)

    def test_shift_covariance(self):
        # circular shift of input shifts every coefficient array equally
        rng = np.random.default_rng(3)
        x = rng.standard_normal(1024)
        k = 137
        d0 = swt_decompose(SignalSegment(x, 100.0))
        d1 = swt_decompose(SignalSegment(np.roll(x, k), 100.0))
        for j in range(6):
            assert np.max(np.abs(np.roll(d0.details[j], k) - d1.details[j])) < 1e-6
        assert np.max(np.abs(np.roll(d0.approx, k) - d1.approx)) < 1e-6

    def test_length_mismatch_rejected(self):
        dec = swt_decompose(SignalSegment(np.zeros(128), 100.0))
        dec.details[2] = np.zeros(64)
        with pytest.raises(ValueError, match="level 3"):
            swt_reconstruct(dec)
