"""Oustaloup band-limited approximation of s**alpha and its discrete realization.

The continuous operator is

    G(s) = K * prod_{k=-N..N} (s + wz_k) / (s + wp_k)

with 2N+1 zero/pole pairs spread geometrically over ``[omega_b, omega_h]``.
For use inside a sampled controller every first-order section is mapped to
discrete time with the bilinear transform and the sections are cascaded.
A single order-41 polynomial transfer function would be hopelessly
ill-conditioned; first-order sections are not.

A fractional integral of order ``a`` is obtained as ``design_oustaloup(-a, ...)``.
Outside the design band the approximation is flat, so even ``alpha = -1`` is
only an integrator for frequencies inside the band.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError, SimulationFault

DEFAULT_N_FILTER = 20
DEFAULT_BAND = (1e-3, 1e3)


@dataclass(frozen=True)
class FracOperator:
    """Designed Oustaloup approximation (immutable, shareable)."""

    alpha: float
    n_filter: int
    omega_b: float
    omega_h: float
    zeros: np.ndarray
    poles: np.ndarray
    gain: float

    @property
    def order(self) -> int:
        return 2 * self.n_filter + 1

    def dc_gain(self) -> float:
        return float(self.gain * np.prod(self.zeros / self.poles))


def design_oustaloup(alpha, n_filter=DEFAULT_N_FILTER, omega_b=DEFAULT_BAND[0],
                     omega_h=DEFAULT_BAND[1]) -> FracOperator:
    """Design the recursive pole/zero ladder approximating ``s**alpha``."""
    if not (np.isfinite(omega_b) and np.isfinite(omega_h)) or not omega_h > omega_b > 0:
        raise ConfigurationError(
            f"invalid band [{omega_b}, {omega_h}]: need 0 < omega_b < omega_h")
    if int(n_filter) != n_filter or n_filter < 1:
        raise ConfigurationError(f"n_filter must be an integer >= 1, got {n_filter}")
    if not np.isfinite(alpha) or abs(alpha) >= 2:
        raise ConfigurationError(f"|alpha| must be < 2, got {alpha}")
    n_filter = int(n_filter)
    k = np.arange(-n_filter, n_filter + 1, dtype=float)
    ratio = omega_h / omega_b
    denom = 2 * n_filter + 1
    zeros = omega_b * ratio ** ((k + n_filter + 0.5 * (1 - alpha)) / denom)
    poles = omega_b * ratio ** ((k + n_filter + 0.5 * (1 + alpha)) / denom)
    zeros.setflags(write=False)
    poles.setflags(write=False)
    return FracOperator(float(alpha), n_filter, float(omega_b), float(omega_h),
                        zeros, poles, float(omega_h ** alpha))


def frequency_response(op: FracOperator, omega):
    """Complex gain ``G(j*omega)``; ``omega`` may be a scalar or an array."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ConfigurationError("omega must be > 0")
    s = 1j * w[..., None]
    g = op.gain * np.prod((s + op.zeros) / (s + op.poles), axis=-1)
    return complex(g) if np.ndim(omega) == 0 else g


@numba.njit(cache=True, nogil=True)
def cascade_step(g, d, state, gain, u):
    """Advance the cascade by one sample.

    Each section is ``1 + g (1 + z^-1) / (1 - (1 - d) z^-1)``: a direct path
    plus a residual in transposed direct form II. Keeping ``d = 1 - pole``
    as its own coefficient avoids the cancellation in ``1 + a1`` for poles
    far below the Nyquist rate, so the realized DC gain stays exact.
    """
    x = u
    for k in range(g.shape[0]):
        v = g[k] * x + state[k]
        state[k] = g[k] * x + v - d[k] * v
        x = x + v
    return gain * x


@dataclass
class FracRealization:
    """Mutable discrete cascade; one real state per section.

    Section ``k`` is the bilinear map of ``(s + z_k) / (s + p_k)``, stored as
    the residual gain ``g[k] = (z_k - p_k) / (c + p_k)`` and pole offset
    ``d[k] = 2 p_k / (c + p_k)`` with ``c = 2 / dt``.
    """

    dt: float
    gain: float
    g: np.ndarray
    d: np.ndarray
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = np.zeros_like(self.g)

    @property
    def n_sections(self) -> int:
        return self.g.shape[0]

    @property
    def section_coefficients(self) -> np.ndarray:
        """Columns ``(b0, b1, a1)`` of ``(b0 + b1 z^-1) / (1 + a1 z^-1)`` per section."""
        a1 = self.d - 1.0
        return np.column_stack([1.0 + self.g, self.g + a1, a1])

    def reset(self):
        self.state[:] = 0.0

    def discrete_poles(self) -> np.ndarray:
        return 1.0 - self.d

    def dc_gain(self) -> float:
        return float(self.gain * np.prod(1.0 + 2.0 * self.g / self.d))

    def copy(self) -> "FracRealization":
        return FracRealization(self.dt, self.gain, self.g, self.d, self.state.copy())


def bilinear_sections(zeros, poles, dt):
    """Residual-form bilinear coefficients ``(g, d)`` for each (s+z)/(s+p)."""
    c = 2.0 / dt
    zeros = np.asarray(zeros, dtype=float)
    poles = np.asarray(poles, dtype=float)
    den = c + poles
    return (zeros - poles) / den, 2.0 * poles / den


def discretize(op: FracOperator, dt) -> FracRealization:
    """Bilinear discretization of each section, cascaded in ascending k."""
    if not dt > 0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    if dt * max(op.omega_h, op.poles[-1], op.zeros[-1]) >= 2:
        warnings.warn(f"dt*omega_h = {dt * op.omega_h:.3g} >= 2: bilinear warping "
                      "distorts the upper part of the band", RuntimeWarning, stacklevel=2)
    g, d = bilinear_sections(op.zeros, op.poles, dt)
    return FracRealization(float(dt), op.gain, g, d)


def step_filter(real: FracRealization, u) -> float:
    """Push one sample through the realization and return the output sample."""
    u = float(u)
    if not np.isfinite(u):
        raise SimulationFault("non-finite input to fractional filter")
    return cascade_step(real.g, real.d, real.state, real.gain, u)


@numba.njit(cache=True, nogil=True)
def _filter_block(g, d, state, gain, u, out):
    for i in range(u.shape[0]):
        out[i] = cascade_step(g, d, state, gain, u[i])


def filter_signal(real: FracRealization, u) -> np.ndarray:
    """Run a whole signal through the realization (state carries over)."""
    u = np.ascontiguousarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise SimulationFault("non-finite input to fractional filter")
    out = np.empty_like(u)
    _filter_block(real.g, real.d, real.state, real.gain, u, out)
    return out


def fractional_integrator(order, dt, n_filter=DEFAULT_N_FILTER,
                          band=DEFAULT_BAND) -> FracRealization:
    """Realization of the band-limited integral of order ``order`` (s**-order)."""
    return discretize(design_oustaloup(-order, n_filter, band[0], band[1]), dt)


def bode_table(alpha, band=DEFAULT_BAND, n_filter=DEFAULT_N_FILTER, n_points=121):
    """Rows ``(omega, magnitude_db, phase_deg)`` on a log grid spanning ``band``."""
    op = design_oustaloup(alpha, n_filter, band[0], band[1])
    w = np.logspace(np.log10(band[0]), np.log10(band[1]), n_points)
    g = frequency_response(op, w)
    return np.column_stack([w, 20 * np.log10(np.abs(g)), np.degrees(np.angle(g))])
