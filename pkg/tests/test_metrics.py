from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from underband.metrics import (dominant_cyclic_peak, envelope_spectrum, kurtosis, save_envelope_csv,
                               sparsity_fraction)
from underband.signal_io import FaultSignalSpec, Signal, generate_fault_signal


def _exact_kurtosis(values):
    """Population m4 / m2^2 in rational arithmetic."""
    xs = [Fraction(v) for v in values]
    mean = sum(xs) / len(xs)
    m2 = sum((x - mean) ** 2 for x in xs) / len(xs)
    m4 = sum((x - mean) ** 4 for x in xs) / len(xs)
    return m4 / m2**2


class TestKurtosis:
    def test_one_hot(self):
        x = np.zeros(8)
        x[3] = 1.0
        assert _exact_kurtosis(x) == Fraction(43, 7)
        assert abs(kurtosis(x) - 43 / 7) <= 1e-12

    def test_gaussian(self):
        x = np.random.default_rng(0).standard_normal(10**6)
        assert abs(kurtosis(x) - 3.0) <= 0.05

    def test_uniform(self):
        # continuous uniform has kurtosis 9/5
        x = np.random.default_rng(1).uniform(-1, 1, 10**6)
        assert kurtosis(x) == pytest.approx(1.8, abs=0.01)

    def test_matches_rational_oracle(self):
        x = np.array([0.5, -1.25, 3.0, 2.0, 0.0, -0.75, 8.0])
        assert kurtosis(x) == pytest.approx(float(_exact_kurtosis(x)), rel=1e-13)

    def test_constant(self):
        with pytest.raises(ValueError):
            kurtosis(np.ones(10))

    def test_too_short(self):
        with pytest.raises(ValueError):
            kurtosis([1.0, 2.0, 3.0])

    @settings(max_examples=50, deadline=None)
    @given(
        x=arrays(float, st.integers(4, 200), elements=st.floats(-100, 100, allow_subnormal=False)),
        scale=st.floats(1e-3, 1e3),
        sign=st.sampled_from([-1.0, 1.0]),
        shift=st.floats(-1e3, 1e3),
    )
    def test_affine_invariance(self, x, scale, sign, shift):
        if np.ptp(x) < 1e-3 * max(1.0, np.abs(x).max()):
            return
        k = kurtosis(x)
        assert kurtosis(sign * scale * x) == pytest.approx(k, rel=1e-9)
        assert kurtosis(x + shift) == pytest.approx(k, rel=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, st.integers(4, 100), elements=st.floats(-10, 10, allow_subnormal=False)))
    def test_lower_bound(self, x):
        # m4 >= m2^2 by Cauchy-Schwarz
        if np.ptp(x) < 1e-6:
            return
        assert kurtosis(x) >= 1.0 - 1e-12

    def test_impulsive_signal(self):
        sig = generate_fault_signal(FaultSignalSpec(noise_std=0.0))
        assert kurtosis(sig.samples) > 10


class TestSparsity:
    def test_counts(self):
        m = np.array([[1.0, 0.0], [1e-4, 0.5]])
        assert sparsity_fraction(m) == 0.5

    def test_threshold_is_strict(self):
        assert sparsity_fraction(np.array([1.0, 1e-3])) == 0.0

    def test_all_zero(self):
        assert sparsity_fraction(np.zeros((3, 3))) == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            sparsity_fraction(np.zeros((0, 3)))

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, st.tuples(st.integers(1, 10), st.integers(1, 10)),
                  elements=st.floats(0, 1e6, allow_subnormal=False)),
           st.floats(1e-3, 1e3))
    def test_scale_invariant_in_unit_interval(self, m, c):
        f = sparsity_fraction(m)
        assert 0.0 <= f <= 1.0
        assert sparsity_fraction(c * m) == pytest.approx(f, abs=1.0 / m.size + 1e-12)


class TestEnvelope:
    def test_am_tone(self):
        fs, n, fm, fc, depth = 8000.0, 8000, 25.0, 1000.0, 0.4
        t = np.arange(n) / fs
        x = (1 + depth * np.cos(2 * np.pi * fm * t)) * np.cos(2 * np.pi * fc * t)
        es = envelope_spectrum(Signal(x, fs))
        assert es.resolution_hz == 1.0
        assert es.freqs_hz.size == n // 2 + 1
        f, a = dominant_cyclic_peak(es, 1.0, 500.0)
        assert f == fm
        # envelope 1 + d cos(.) has a line of height d/2 on the |DFT|/N scale
        assert a == pytest.approx(depth / 2, rel=1e-9)
        assert es.amplitudes[0] == pytest.approx(0.0, abs=1e-12)

    def test_fault_signal_line(self):
        sig = generate_fault_signal(FaultSignalSpec(noise_std=0.0))
        f, _ = dominant_cyclic_peak(envelope_spectrum(sig), 45.75, 137.25)
        assert abs(f - 91.5) <= 1.0

    def test_idler_like_line(self):
        spec = FaultSignalSpec(sample_rate_hz=48000.0, fault_freq_hz=5.5, carrier_freq_hz=2500.0,
                               duration_s=2.0, noise_std=0.0)
        f, _ = dominant_cyclic_peak(envelope_spectrum(generate_fault_signal(spec)), 2.75, 8.25)
        assert abs(f - 5.5) <= 0.5

    def test_too_short(self):
        with pytest.raises(ValueError):
            envelope_spectrum(Signal(np.ones(8), 10.0))

    def test_bad_band(self):
        es = envelope_spectrum(Signal(np.random.default_rng(0).standard_normal(100), 100.0))
        with pytest.raises(ValueError):
            dominant_cyclic_peak(es, 10.0, 5.0)
        with pytest.raises(ValueError):
            dominant_cyclic_peak(es, 0.0, 5.0)
        with pytest.raises(ValueError):
            dominant_cyclic_peak(es, 1.0, 60.0)

    def test_csv(self, tmp_path):
        es = envelope_spectrum(Signal(np.random.default_rng(0).standard_normal(64), 64.0))
        save_envelope_csv(es, tmp_path / "e.csv")
        data = np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data[:, 0], es.freqs_hz)
        np.testing.assert_array_equal(data[:, 1], es.amplitudes)
