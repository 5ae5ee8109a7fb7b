"""Average model of a three-phase grid-connected MMC.

State layout per phase (row of a ``(3, 2 + 2*n_cells)`` array)::

    [i_upper, i_lower, vcap_upper[0..n-1], vcap_lower[0..n-1]]

The upper arm current flows from the positive DC rail to the phase
terminal, the lower arm current from the terminal to the negative rail, so
the grid receives ``i_upper - i_lower``. Each cell has an insertion function
``s`` in [0, 1] used both in the arm KVL (``s * v_cap``) and in the
capacitor current (``s * i_arm``), which is what makes the model conserve
energy.

The phase terminal is tied to an ideal grid source. The converter voltage
reported for harmonic analysis is the arm EMF ``(v_lower - v_upper) / 2``,
i.e. the valve-side voltage behind the arm inductance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from .errors import ConfigurationError
from .signals import park


@dataclass
class MmcParams:
    n_cells: int = 4
    L: float = 5e-3
    R: float = 0.1
    C: float = 2e-3
    vdc: float = 500.0
    grid_amplitude: float = None
    grid_freq: float = 2 * np.pi * 50.0
    grid_phase_scale: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.grid_amplitude is None:
            self.grid_amplitude = 0.35 * self.vdc
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ConfigurationError("n_cells must be an integer >= 1")
        self.n_cells = int(self.n_cells)
        if not (self.L > 0 and self.C > 0 and self.R >= 0):
            raise ConfigurationError("need L > 0, C > 0, R >= 0")
        if not self.vdc > 0:
            raise ConfigurationError("vdc must be > 0")
        if len(self.grid_phase_scale) != 3:
            raise ConfigurationError("grid_phase_scale needs three entries")

    @property
    def phases(self) -> int:
        return 3

    @property
    def state_size(self) -> int:
        return 3 * (2 + 2 * self.n_cells)

    @property
    def f0(self) -> float:
        return self.grid_freq / (2 * np.pi)


class MmcState:
    """Thin view over the ``(3, 2 + 2n)`` state array."""

    def __init__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[0] != 3 or (x.shape[1] - 2) % 2 or x.shape[1] < 4:
            raise ConfigurationError(f"state must have shape (3, 2 + 2n), got {x.shape}")
        self.x = x

    @classmethod
    def zeros(cls, n_cells):
        return cls(np.zeros((3, 2 + 2 * n_cells)))

    @classmethod
    def precharged(cls, params: MmcParams, vdc=None):
        """Currents zero, every capacitor at vdc / n_cells."""
        vdc = params.vdc if vdc is None else vdc
        s = cls.zeros(params.n_cells)
        s.x[:, 2:] = vdc / params.n_cells
        return s

    @property
    def n_cells(self) -> int:
        return (self.x.shape[1] - 2) // 2

    @property
    def i_upper(self):
        return self.x[:, 0]

    @property
    def i_lower(self):
        return self.x[:, 1]

    @property
    def vcap_upper(self):
        return self.x[:, 2:2 + self.n_cells]

    @property
    def vcap_lower(self):
        return self.x[:, 2 + self.n_cells:]

    def flat(self):
        return self.x.ravel()

    def copy(self):
        return MmcState(self.x.copy())

    def __len__(self):
        return self.x.size


@dataclass
class ArmDuties:
    d_upper: np.ndarray
    d_lower: np.ndarray
    n_clamped: int = field(default=0)

    @classmethod
    def uniform(cls, n_cells, upper, lower):
        up = np.broadcast_to(np.asarray(upper, float).reshape(-1, 1), (3, n_cells)).copy()
        lo = np.broadcast_to(np.asarray(lower, float).reshape(-1, 1), (3, n_cells)).copy()
        return cls(up, lo)


@numba.njit(cache=True, nogil=True)
def grid_voltages(amplitude, omega, scale, t, out):
    wt = omega * t
    out[0] = scale[0] * amplitude * math.cos(wt)
    out[1] = scale[1] * amplitude * math.cos(wt - 2.0943951023931953)
    out[2] = scale[2] * amplitude * math.cos(wt + 2.0943951023931953)


@numba.njit(cache=True, nogil=True)
def derivatives_kernel(x, du, dl, L, R, C, vdc, vg, out):
    n = du.shape[1]
    for ph in range(3):
        iu = x[ph, 0]
        il = x[ph, 1]
        vu = 0.0
        vl = 0.0
        for k in range(n):
            vu += du[ph, k] * x[ph, 2 + k]
            vl += dl[ph, k] * x[ph, 2 + n + k]
        out[ph, 0] = (0.5 * vdc - vu - R * iu - vg[ph]) / L
        out[ph, 1] = (0.5 * vdc - vl - R * il + vg[ph]) / L
        for k in range(n):
            out[ph, 2 + k] = du[ph, k] * iu / C
            out[ph, 2 + n + k] = dl[ph, k] * il / C


@numba.njit(cache=True, nogil=True)
def power_kernel(x, R, vdc, vg):
    """(DC power in, resistive loss, AC power to grid) at one state."""
    p_dc = 0.0
    p_loss = 0.0
    p_ac = 0.0
    for ph in range(3):
        iu = x[ph, 0]
        il = x[ph, 1]
        p_dc += 0.5 * vdc * (iu + il)
        p_loss += R * (iu * iu + il * il)
        p_ac += vg[ph] * (iu - il)
    return p_dc, p_loss, p_ac


@numba.njit(cache=True, nogil=True)
def stored_energy(x, L, C):
    e = 0.0
    for ph in range(3):
        e += 0.5 * L * (x[ph, 0] ** 2 + x[ph, 1] ** 2)
        for k in range(2, x.shape[1]):
            e += 0.5 * C * x[ph, k] ** 2
    return e


@numba.njit(cache=True, nogil=True)
def modulate_kernel(v_ref, vdc, du, dl):
    """Uniform insertion indices; returns how many indices were clamped."""
    clamped = 0
    n = du.shape[1]
    for ph in range(3):
        nu = 0.5 - v_ref[ph] / vdc
        nl = 0.5 + v_ref[ph] / vdc
        if nu < 0.0 or nu > 1.0:
            clamped += 1
            nu = min(max(nu, 0.0), 1.0)
        if nl < 0.0 or nl > 1.0:
            clamped += 1
            nl = min(max(nl, 0.0), 1.0)
        for k in range(n):
            du[ph, k] = nu
            dl[ph, k] = nl
    return clamped


@numba.njit(cache=True, nogil=True)
def sort_arm(vcap, current, index, out):
    """Insert round(index*n) cells: lowest voltages when the arm current
    charges them, highest when it discharges."""
    n = vcap.shape[0]
    n_on = int(math.floor(index * n + 0.5))
    order = np.argsort(vcap)
    for k in range(n):
        out[k] = 0.0
    for r in range(n_on):
        if current >= 0.0:
            out[order[r]] = 1.0
        else:
            out[order[n - 1 - r]] = 1.0


@numba.njit(cache=True, nogil=True)
def balance_kernel(x, du, dl):
    n = du.shape[1]
    for ph in range(3):
        nu = 0.0
        nl = 0.0
        for k in range(n):
            nu += du[ph, k]
            nl += dl[ph, k]
        sort_arm(x[ph, 2:2 + n], x[ph, 0], nu / n, du[ph])
        sort_arm(x[ph, 2 + n:], x[ph, 1], nl / n, dl[ph])


@numba.njit(cache=True, nogil=True)
def converter_emf(x, du, dl, out):
    n = du.shape[1]
    for ph in range(3):
        vu = 0.0
        vl = 0.0
        for k in range(n):
            vu += du[ph, k] * x[ph, 2 + k]
            vl += dl[ph, k] * x[ph, 2 + n + k]
        out[ph] = 0.5 * (vl - vu)


def _vdc(params, vdc):
    return params.vdc if vdc is None else float(vdc)


def derivatives(state: MmcState, duties: ArmDuties, params: MmcParams, t, vdc=None) -> MmcState:
    """Time derivative of the plant state with duties held fixed."""
    vg = np.empty(3)
    grid_voltages(params.grid_amplitude, params.grid_freq,
                  np.asarray(params.grid_phase_scale, float), float(t), vg)
    out = np.empty_like(state.x)
    derivatives_kernel(state.x, duties.d_upper, duties.d_lower, params.L, params.R,
                       params.C, _vdc(params, vdc), vg, out)
    return MmcState(out)


def power_flows(state: MmcState, params: MmcParams, t, vdc=None):
    """``(p_dc, p_loss, p_ac)`` in W at one instant."""
    vg = np.empty(3)
    grid_voltages(params.grid_amplitude, params.grid_freq,
                  np.asarray(params.grid_phase_scale, float), float(t), vg)
    return power_kernel(state.x, params.R, _vdc(params, vdc), vg)


def energy(state: MmcState, params: MmcParams) -> float:
    """Energy stored in arm inductors and cell capacitors (J)."""
    return stored_energy(state.x, params.L, params.C)


def modulate(v_ref_abc, params: MmcParams, vdc=None) -> ArmDuties:
    """Map per-phase voltage references to uniform arm insertion indices."""
    v_ref = np.asarray(v_ref_abc, dtype=float).reshape(3)
    du = np.empty((3, params.n_cells))
    dl = np.empty((3, params.n_cells))
    clamped = modulate_kernel(v_ref, _vdc(params, vdc), du, dl)
    return ArmDuties(du, dl, clamped)


def balance_sort(state: MmcState, duties: ArmDuties, control_period) -> ArmDuties:
    """Turn arm insertion indices into per-cell on/off duties by voltage sorting.

    Meant to run once per control period, not per integration step.
    """
    if not control_period > 0:
        raise ConfigurationError("control_period must be > 0")
    du = duties.d_upper.copy()
    dl = duties.d_lower.copy()
    balance_kernel(state.x, du, dl)
    return ArmDuties(du, dl, duties.n_clamped)


class PlantOutputs(NamedTuple):
    i_abc: np.ndarray
    v_ll: np.ndarray
    i_circ: np.ndarray
    v_dq: tuple
    i_dq: tuple
    theta_grid: float
    e_abc: np.ndarray


def outputs(state: MmcState, params: MmcParams, t, duties: ArmDuties = None) -> PlantOutputs:
    """Measured quantities. ``v_ll`` is ``(ab, bc, ca)`` of the converter EMF
    and needs the applied ``duties``; without them it is reported as zeros."""
    theta = params.grid_freq * float(t)
    i_abc = state.i_upper - state.i_lower
    i_circ = 0.5 * (state.i_upper + state.i_lower)
    e = np.zeros(3)
    if duties is not None:
        converter_emf(state.x, duties.d_upper, duties.d_lower, e)
    v_ll = np.array([e[0] - e[1], e[1] - e[2], e[2] - e[0]])
    vg = np.empty(3)
    grid_voltages(params.grid_amplitude, params.grid_freq,
                  np.asarray(params.grid_phase_scale, float), float(t), vg)
    return PlantOutputs(i_abc, v_ll, i_circ, park(vg[0], vg[1], vg[2], theta),
                        park(i_abc[0], i_abc[1], i_abc[2], theta), theta, e)
