import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from mmc_fofpi.errors import ConfigurationError, SimulationFault
from mmc_fofpi.fracorder import (bode_table, design_oustaloup, discretize, filter_signal,
                                 fractional_integrator, frequency_response, step_filter)


def slope_db_per_decade(op, lo=1e-2, hi=1e2):
    w = np.logspace(np.log10(lo), np.log10(hi), 200)
    mag = 20 * np.log10(np.abs(frequency_response(op, w)))
    return np.polyfit(np.log10(w), mag, 1)[0]


def continuous_step(op, t):
    """Exact step response of the rational cascade via the matrix exponential.

    Section k: x_k' = -p_k x_k + y_{k-1}, y_k = (z_k - p_k) x_k + y_{k-1}, y_{-1} = u.
    """
    n = op.order
    a = np.zeros((n + 1, n + 1))  # last state is the constant unit input
    out = np.zeros(n + 1)
    out[n] = 1.0
    for k in range(n):
        a[k] = out
        a[k, k] -= op.poles[k]
        out = out.copy()
        out[k] += op.zeros[k] - op.poles[k]
    x0 = np.zeros(n + 1)
    x0[n] = 1.0
    return op.gain * out @ (expm(a * t) @ x0)


class TestDesign:
    def test_alpha_zero_is_identity(self):
        op = design_oustaloup(0.0, 20, 1e-3, 1e3)
        assert op.gain == 1.0
        np.testing.assert_array_equal(op.zeros, op.poles)
        np.testing.assert_allclose(frequency_response(op, np.logspace(-4, 4, 9)), 1.0 + 0j)

    def test_section_count_and_gain(self):
        op = design_oustaloup(0.7, 20, 1e-3, 1e3)
        assert len(op.zeros) == len(op.poles) == 41 == op.order
        assert op.gain == pytest.approx(1e3 ** 0.7)

    def test_half_order_unity_at_band_centre(self):
        op = design_oustaloup(0.5)
        assert abs(frequency_response(op, 1.0)) == pytest.approx(1.0, rel=0.01)

    def test_first_order_at_ten(self):
        op = design_oustaloup(1.0)
        assert abs(frequency_response(op, 10.0)) == pytest.approx(10.0, rel=0.05)

    # frozen from a 30-digit mpmath evaluation of the pole/zero product
    @pytest.mark.parametrize("alpha, omega, mag, phase", [
        (0.5, 1.0, 1.0, 44.94290694),
        (0.5, 10.0, 3.16219972466, 44.71168921),
        (1.0, 10.0, 9.99950008749, 89.42133172),
        (0.5, 0.01, 0.100245619449, 42.15426066),
        (1.0, 0.01, 0.0100498756206, 84.2888339),
        (-0.5, 1.0, 1.0, -44.94290694),
    ])
    def test_frozen_response(self, alpha, omega, mag, phase):
        g = frequency_response(design_oustaloup(alpha), omega)
        assert abs(g) == pytest.approx(mag, rel=1e-10)
        assert np.degrees(np.angle(g)) == pytest.approx(phase, abs=1e-7)

    @pytest.mark.parametrize("kw", [dict(omega_b=1.0, omega_h=1.0), dict(omega_b=10.0, omega_h=1.0),
                                    dict(omega_b=0.0, omega_h=1.0), dict(n_filter=0)])
    def test_bad_design(self, kw):
        with pytest.raises(ConfigurationError):
            design_oustaloup(0.5, **kw)

    @pytest.mark.parametrize("alpha", [2.0, -2.0, 2.5, np.nan])
    def test_order_limits(self, alpha):
        with pytest.raises(ConfigurationError):
            design_oustaloup(alpha)

    @given(st.floats(0.05, 0.95))
    def test_interlacing_positive(self, alpha):
        op = design_oustaloup(alpha)
        assert np.all(op.zeros < op.poles)

    @given(st.floats(-0.95, -0.05))
    def test_interlacing_negative(self, alpha):
        op = design_oustaloup(alpha)
        assert np.all(op.zeros > op.poles)

    @given(st.floats(-1.5, 1.5))
    def test_mid_band_slope(self, alpha):
        assert slope_db_per_decade(design_oustaloup(alpha)) == pytest.approx(20 * alpha, abs=0.5)


class TestRealization:
    def test_identity_filter_bitwise(self, rng):
        real = discretize(design_oustaloup(0.0), 1e-4)
        u = rng.standard_normal(1000)
        y = np.array([step_filter(real, v) for v in u])
        np.testing.assert_array_equal(y, u)

    def test_block_matches_samplewise(self, rng):
        a, b = fractional_integrator(0.6, 1e-4), fractional_integrator(0.6, 1e-4)
        u = rng.standard_normal(300)
        np.testing.assert_array_equal(filter_signal(a, u), [step_filter(b, v) for v in u])
        with pytest.raises(SimulationFault):
            filter_signal(a, [1.0, np.inf])

    def test_dc_gain_preserved(self):
        op = design_oustaloup(-0.6)
        real = discretize(op, 1e-4)
        assert real.n_sections == 41
        assert real.dc_gain() == pytest.approx(op.dc_gain(), rel=1e-9)

    def test_coefficients_are_bilinear(self):
        op = design_oustaloup(0.5)
        dt = 1e-4
        c = 2 / dt
        b0, b1, a1 = discretize(op, dt).section_coefficients.T
        np.testing.assert_allclose(b0, (c + op.zeros) / (c + op.poles), rtol=1e-14)
        np.testing.assert_allclose(b1, (op.zeros - c) / (c + op.poles), rtol=1e-12)
        np.testing.assert_allclose(a1, (op.poles - c) / (c + op.poles), rtol=1e-12)

    def test_stable(self):
        for alpha in (-1.2, -0.5, 0.5, 1.2):
            assert np.all(np.abs(discretize(design_oustaloup(alpha), 1e-4).discrete_poles()) < 1)

    def test_zero_in_zero_out(self):
        real = fractional_integrator(0.7, 1e-4)
        assert all(step_filter(real, 0.0) == 0.0 for _ in range(200))

    def test_linearity(self, rng):
        r1, r2 = fractional_integrator(0.4, 1e-4), fractional_integrator(0.4, 1e-4)
        u = rng.standard_normal(500)
        y1 = np.array([step_filter(r1, v) for v in u])
        y2 = np.array([step_filter(r2, 2 * v) for v in u])
        np.testing.assert_allclose(y2, 2 * y1, rtol=1e-12, atol=1e-300)

    def test_section_order_commutes(self, rng):
        op = design_oustaloup(-0.5)
        fwd = discretize(op, 1e-4)
        rev = discretize(op, 1e-4)
        rev.g, rev.d = rev.g[::-1].copy(), rev.d[::-1].copy()
        u = rng.standard_normal(2000)
        a = np.array([step_filter(fwd, v) for v in u])
        b = np.array([step_filter(rev, v) for v in u])
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12 * np.abs(a).max())

    def test_step_matches_continuous(self):
        op = design_oustaloup(-0.5)
        real = discretize(op, 1e-4)
        y = 0.0
        for _ in range(10000):
            y = step_filter(real, 1.0)
        exact = continuous_step(op, 1.0)
        assert y == pytest.approx(exact, rel=1e-3)

    def test_sinusoid_gain_at_band_centre(self):
        op = design_oustaloup(-0.5)
        dt, w = 1e-3, 1.0
        real = discretize(op, dt)
        t = np.arange(int(60 * 2 * np.pi / w / dt)) * dt
        y = np.array([step_filter(real, np.sin(w * v)) for v in t])
        tail = y[t > t[-1] - 4 * np.pi / w]
        amp = 0.5 * (tail.max() - tail.min())
        assert amp == pytest.approx(abs(frequency_response(op, w)), rel=0.01)

    def test_bad_dt(self):
        with pytest.raises(ConfigurationError):
            discretize(design_oustaloup(0.5), 0.0)

    def test_coarse_dt_warns(self):
        with pytest.warns(RuntimeWarning):
            discretize(design_oustaloup(0.5), 0.01)

    def test_nonfinite_input(self):
        with pytest.raises(SimulationFault):
            step_filter(fractional_integrator(0.5, 1e-4), np.nan)

    def test_reset_and_copy(self):
        real = fractional_integrator(0.5, 1e-4)
        step_filter(real, 1.0)
        clone = real.copy()
        real.reset()
        assert np.all(real.state == 0) and np.any(clone.state != 0)


def test_bode_table_columns():
    table = bode_table(0.5, (1e-3, 1e3), 20, 121)
    assert table.shape == (121, 3)
    mid = (table[:, 0] >= 1e-2) & (table[:, 0] <= 1e2)
    slope = np.polyfit(np.log10(table[mid, 0]), table[mid, 1], 1)[0]
    assert slope == pytest.approx(10.0, abs=0.5)
