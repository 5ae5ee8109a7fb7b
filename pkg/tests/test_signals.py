import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmc_fofpi.errors import AnalysisError, ReferenceFault
from mmc_fofpi.signals import (abc_to_dq, dq_to_abc, inverse_park, park,
                               power_to_current_refs, thd)

SHIFTS = np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3])


def balanced(amp, phase, theta):
    return amp * np.cos(theta + SHIFTS + phase)


class TestPark:
    def test_aligned(self):
        d, q = abc_to_dq(balanced(10.0, 0.0, 0.7), 0.7)
        assert d == pytest.approx(10.0, rel=1e-14) and abs(q) < 1e-13

    def test_q_lags(self):
        # a set lagging the angle by 90 degrees lands on +q
        d, q = abc_to_dq(balanced(4.0, -np.pi / 2, 1.1), 1.1)
        assert abs(d) < 1e-13 and q == pytest.approx(4.0, rel=1e-14)

    def test_zero(self):
        assert abc_to_dq(np.zeros(3), 2.0) == (0.0, 0.0)
        np.testing.assert_array_equal(dq_to_abc((0.0, 0.0), 2.0), 0.0)

    def test_inverse_at_zero(self):
        np.testing.assert_allclose(dq_to_abc((3.0, 0.0), 0.0)[0], 3.0)

    @given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-10, 10))
    def test_roundtrip(self, d, q, theta):
        x = dq_to_abc((d, q), theta)
        assert np.sum(x) == pytest.approx(0.0, abs=1e-12 * (abs(d) + abs(q) + 1))
        back = abc_to_dq(x, theta)
        np.testing.assert_allclose(back, (d, q), rtol=1e-12, atol=1e-12 * (abs(d) + abs(q)))

    def test_kernel_matches_vectorized(self, rng):
        for _ in range(50):
            x, th = rng.standard_normal(3), rng.uniform(-7, 7)
            np.testing.assert_allclose(park(*x, th), abc_to_dq(x, th), rtol=1e-13, atol=1e-14)
            out = np.empty(3)
            inverse_park(x[0], x[1], th, out)
            np.testing.assert_allclose(out, dq_to_abc(x[:2], th), rtol=1e-13, atol=1e-14)

    def test_broadcast(self):
        theta = np.linspace(0, 1, 5)
        d, q = abc_to_dq(balanced(2.0, 0.0, theta[None, :].T).T, theta)
        np.testing.assert_allclose(d, 2.0)


class TestRefs:
    def test_values(self):
        assert power_to_current_refs(0, 0, 100) == (0.0, 0.0)
        assert power_to_current_refs(1500.0, 0.0, 100.0)[0] == pytest.approx(10.0)
        a = power_to_current_refs(900.0, 300.0, 50.0)
        b = power_to_current_refs(900.0, 300.0, 100.0)
        np.testing.assert_allclose(b, np.array(a) / 2)

    def test_sign_of_reactive(self):
        assert power_to_current_refs(0.0, 150.0, 100.0)[1] == pytest.approx(-1.0)

    def test_low_voltage(self):
        with pytest.raises(ReferenceFault):
            power_to_current_refs(1.0, 0.0, 0.5)


def tone(fs, f0, periods, parts, shift=0):
    t = (np.arange(int(round(fs / f0 * periods))) + shift) / fs
    return sum(a * np.sin(2 * np.pi * h * f0 * t) for h, a in parts.items())


class TestThd:
    def test_pure_sine(self):
        r = thd(tone(10000, 50, 5, {1: 1.0}), 10000, 50)
        assert r.thd < 1e-9
        assert r.fundamental_amplitude == pytest.approx(1.0, rel=1e-12)

    def test_third_and_fifth(self):
        r = thd(tone(10000, 50, 5, {1: 1.0, 3: 0.05, 5: 0.05}), 10000, 50)
        assert r.thd == pytest.approx(np.sqrt(0.05 ** 2 * 2), abs=1e-6)
        assert r.harmonic(3) == pytest.approx(0.05, rel=1e-9)
        assert r.thd_percent == pytest.approx(100 * r.thd)

    def test_trailing_whole_period_window(self):
        x = np.concatenate([np.full(77, 5.0), tone(10000, 50, 4, {1: 2.0, 7: 0.2})])
        r = thd(x, 10000, 50)
        assert r.n_periods == 4 and r.thd == pytest.approx(0.1, rel=1e-9)

    def test_too_short(self):
        with pytest.raises(AnalysisError):
            thd(tone(10000, 50, 1.5, {1: 1.0}), 10000, 50)

    def test_degenerate(self):
        with pytest.raises(AnalysisError):
            thd(np.zeros(1000), 10000, 50)
        with pytest.raises(AnalysisError):
            thd(tone(10000, 50, 5, {3: 1.0}), 10000, 50)

    def test_parseval(self, rng):
        x = tone(5000, 50, 4, {1: 1.0}) + 0.1 * rng.standard_normal(400)
        r = thd(x, 5000, 50)
        total = r.fundamental_amplitude ** 2 + np.sum(r.harmonic_amplitudes ** 2)
        assert total <= 2 * np.mean(x ** 2) + 1e-9

    @given(st.floats(1e-3, 1e3))
    def test_scale_invariant(self, k):
        x = tone(10000, 50, 3, {1: 1.0, 2: 0.1, 11: 0.02})
        assert thd(k * x, 10000, 50).thd == pytest.approx(thd(x, 10000, 50).thd, rel=1e-12)

    @given(st.integers(1, 500))
    def test_shift_invariant(self, shift):
        base = thd(tone(10000, 50, 3, {1: 1.0, 2: 0.1, 11: 0.02}), 10000, 50).thd
        moved = thd(tone(10000, 50, 3, {1: 1.0, 2: 0.1, 11: 0.02}, shift), 10000, 50).thd
        assert moved == pytest.approx(base, abs=1e-9)

    def test_above_nyquist_dropped(self):
        r = thd(tone(1000, 50, 4, {1: 1.0}), 1000, 50, max_harmonic=50)
        assert np.all(r.harmonic_amplitudes[9:] == 0.0)
