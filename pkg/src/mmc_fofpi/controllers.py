"""Fractional-order PI and fuzzy-scheduled fractional-order PI current control.

Both laws share one kernel::

    u = kp * e + ki * I^alpha[e]

where ``I^alpha`` is the band-limited Oustaloup realization of ``s**-alpha``.
The FOFPI variant only differs in where ``kp`` and ``ki`` come from: an
interval type-2 FIS evaluated on the error and its filtered derivative. The
scheduled ``ki`` multiplies the integrator *output*.

Anti-windup is conditional integration: while the previous output sat on a
limit and the error pushes further into it, the integrator is fed zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError, SimulationFault
from .fracorder import DEFAULT_BAND, DEFAULT_N_FILTER, FracRealization, cascade_step, fractional_integrator
from .it2fis import It2Fis, schedule_kernel


@dataclass(frozen=True)
class FopiParams:
    kp: float
    ki: float
    alpha: float

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ConfigurationError("kp and ki must be >= 0")
        if not 0 < self.alpha < 2:
            raise ConfigurationError(f"alpha must lie in (0, 2), got {self.alpha}")


@dataclass
class ControllerState:
    """Per-axis controller memory."""

    integrator: FracRealization
    alpha: float
    u_max: float = np.inf
    tau_d: float = None
    fis: It2Fis = None
    prev_error: float = 0.0
    prev_output: float = 0.0
    de_filtered: float = 0.0
    kp: float = 0.0
    ki: float = 0.0
    fis_underflows: int = 0
    _xi: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.tau_d is None:
            self.tau_d = 10.0 * self.integrator.dt
        if self.fis is not None:
            self._xi = (np.empty(self.fis.n_rules), np.empty(self.fis.n_rules))

    @property
    def dt(self) -> float:
        return self.integrator.dt


def make_state(alpha, dt, u_max=np.inf, fis=None, tau_d=None,
               n_filter=DEFAULT_N_FILTER, band=DEFAULT_BAND) -> ControllerState:
    """Fresh controller at rest, with the integrator realized at ``dt``."""
    if not 0 < alpha < 2:
        raise ConfigurationError(f"alpha must lie in (0, 2), got {alpha}")
    if not u_max > 0:
        raise ConfigurationError("u_max must be > 0")
    return ControllerState(fractional_integrator(alpha, dt, n_filter, band), float(alpha),
                           float(u_max), tau_d, fis)


@numba.njit(cache=True, nogil=True)
def pi_law(kp, ki, e, prev_output, u_max, fg, fd, fstate, fgain):
    if abs(prev_output) >= u_max and e * prev_output > 0.0:
        drive = 0.0
    else:
        drive = e
    integral = cascade_step(fg, fd, fstate, fgain, drive)
    u = kp * e + ki * integral
    if u > u_max:
        u = u_max
    elif u < -u_max:
        u = -u_max
    return u


@numba.njit(cache=True, nogil=True)
def derivative_filter(e, prev_error, de_filtered, dt, tau_d):
    """Backward difference smoothed by a first-order low-pass."""
    raw = (e - prev_error) / dt
    return de_filtered + dt / (tau_d + dt) * (raw - de_filtered)


def _check(state: ControllerState, e, dt):
    if not np.isfinite(e):
        raise SimulationFault("non-finite error signal")
    if not np.isclose(dt, state.dt, rtol=1e-12, atol=0.0):
        raise ConfigurationError(f"dt={dt} differs from the integrator's dt={state.dt}")


def fopi_step(state: ControllerState, params: FopiParams, e, dt) -> float:
    """One sample of the fixed-gain fractional PI law."""
    e = float(e)
    _check(state, e, dt)
    if params.alpha != state.alpha:
        raise ConfigurationError("params.alpha does not match the realized integrator")
    f = state.integrator
    u = pi_law(params.kp, params.ki, e, state.prev_output, state.u_max,
               f.g, f.d, f.state, f.gain)
    state.de_filtered = derivative_filter(e, state.prev_error, state.de_filtered, dt, state.tau_d)
    state.prev_error = e
    state.prev_output = u
    state.kp, state.ki = params.kp, params.ki
    return u


def fofpi_step(state: ControllerState, e, dt) -> float:
    """One sample of the FIS-scheduled fractional PI law."""
    if state.fis is None:
        raise ConfigurationError("FOFPI step requires a FIS on the controller state")
    e = float(e)
    _check(state, e, dt)
    state.de_filtered = derivative_filter(e, state.prev_error, state.de_filtered, dt, state.tau_d)
    kp, ki, underflow = schedule_kernel(*state.fis.kernel_args(), e, state.de_filtered, *state._xi)
    state.fis_underflows += int(underflow)
    f = state.integrator
    u = pi_law(kp, ki, e, state.prev_output, state.u_max, f.g, f.d, f.state, f.gain)
    state.prev_error = e
    state.prev_output = u
    state.kp, state.ki = kp, ki
    return u
