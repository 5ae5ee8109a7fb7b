"""Fixed-step closed-loop simulation of the MMC with dq current control.

One control tick (period ``dt_ctrl``):

1. sample arm currents and grid voltage, Park-transform at the grid angle;
2. form dq current errors against the reference schedule;
3. step one controller per axis (FOPI or FOFPI);
4. add grid-voltage feedforward, inverse-Park, modulate (optionally sort);
5. hold the duties and integrate the plant with ``dt_ctrl / dt_sim`` RK4
   steps, accumulating DC, loss and AC energy with the same RK4 weights.

Every tick is logged. A non-finite or divergent state stops the run and the
partial log is returned together with a fault record.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .controllers import FopiParams, derivative_filter, pi_law
from .errors import AnalysisError, ConfigurationError, SimulationFault
from .fracorder import DEFAULT_BAND, DEFAULT_N_FILTER, fractional_integrator
from .it2fis import It2Fis, default_fis, schedule_kernel
from .mmcplant import (ArmDuties, MmcParams, MmcState, balance_kernel, converter_emf,
                       derivatives_kernel, grid_voltages, modulate_kernel, power_kernel,
                       stored_energy)
from .signals import inverse_park, park, thd

FOPI = "fopi"
FOFPI = "fofpi"

FAULT_NONE, FAULT_NONFINITE, FAULT_DIVERGED, FAULT_REFERENCE = 0, 1, 2, 3
FAULT_NAMES = {FAULT_NONFINITE: "non-finite state", FAULT_DIVERGED: "state diverged",
               FAULT_REFERENCE: "reference fault (grid voltage collapsed)"}

ARMS = ("upper_a", "upper_b", "upper_c", "lower_a", "lower_b", "lower_c")
COLUMNS = (
    ["t", "vdc"]
    + [f"i_u_{p}" for p in "abc"] + [f"i_l_{p}" for p in "abc"]
    + [f"i_ph_{p}" for p in "abc"] + [f"i_circ_{p}" for p in "abc"]
    + ["v_ll_ab", "v_ll_bc", "v_ll_ca", "i_d", "i_q", "i_d_ref", "i_q_ref"]
    + ["e_d", "kp_d", "ki_d", "u_d", "e_q", "kp_q", "ki_q", "u_q"]
    + [f"vcap_{s}_{arm}" for arm in ARMS for s in ("mean", "min", "max")]
    + ["energy_stored", "energy_dc", "energy_loss", "energy_ac"]
)
COL = {name: i for i, name in enumerate(COLUMNS)}
N_COLUMNS = len(COLUMNS)


@dataclass
class ControllerConfig:
    """Controller selection and parameters for both dq axes."""

    kind: str = FOPI
    fopi_d: FopiParams = field(default_factory=lambda: FopiParams(30.0, 3000.0, 0.9))
    fopi_q: FopiParams = field(default_factory=lambda: FopiParams(30.0, 3000.0, 0.9))
    fis_d: It2Fis = None
    fis_q: It2Fis = None
    alpha: float = 0.9
    u_max: float = None
    tau_d: float = None
    feedforward: bool = True
    n_filter: int = DEFAULT_N_FILTER
    band: tuple = DEFAULT_BAND

    def __post_init__(self):
        if self.kind not in (FOPI, FOFPI):
            raise ConfigurationError(f"controller kind must be 'fopi' or 'fofpi', got {self.kind!r}")
        if not 0 < self.alpha < 2:
            raise ConfigurationError("alpha must lie in (0, 2)")


@dataclass
class Scenario:
    """Closed-loop experiment description.

    ``vdc_profile`` and ``reference_profile`` are piecewise-constant
    schedules ``[(t, ...), ...]`` starting at t = 0. References are
    ``(i_d, i_q)`` in A, or ``(p, q)`` in W/var when ``reference_mode`` is
    ``"power"``.
    """

    duration: float = 0.4
    dt_sim: float = 20e-6
    dt_ctrl: float = 100e-6
    vdc_profile: list = field(default_factory=lambda: [(0.0, 500.0)])
    reference_profile: list = field(default_factory=lambda: [(0.0, 10.0, 0.0)])
    reference_mode: str = "current"
    plant: MmcParams = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    thd_window: int = 5
    seed: int = 0
    balance_sort: bool = False
    i_rated: float = 10.0
    divergence_factor: float = 10.0
    log_decimation: int = 1

    def __post_init__(self):
        if self.plant is None:
            self.plant = MmcParams(vdc=self.vdc_profile[0][1])

    @property
    def n_sub(self) -> int:
        return int(round(self.dt_ctrl / self.dt_sim))

    @property
    def n_ticks(self) -> int:
        return int(math.floor(self.duration / self.dt_ctrl + 1e-9))

    @property
    def vdc0(self) -> float:
        return float(self.vdc_profile[0][1])

    def u_max(self) -> float:
        u = self.controller.u_max
        return 1.2 * self.vdc0 / 2 if u is None else float(u)

    def tau_d(self) -> float:
        tau = self.controller.tau_d
        return 10.0 * self.dt_ctrl if tau is None else float(tau)

    def fis_pair(self):
        c = self.controller
        fallback = default_fis(self.i_rated, self.dt_ctrl)
        return (c.fis_d or fallback), (c.fis_q or c.fis_d or fallback)

    def validate(self):
        if not (self.dt_sim > 0 and self.dt_ctrl > 0 and self.duration > 0):
            raise ConfigurationError("duration, dt_sim and dt_ctrl must be > 0")
        ratio = self.dt_ctrl / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ConfigurationError("dt_ctrl must be an integer multiple of dt_sim")
        period = 1.0 / self.plant.f0
        if self.duration < (2 + self.thd_window) * period - 1e-12:
            raise ConfigurationError(
                f"duration must cover 2 + thd_window = {2 + self.thd_window} grid periods")
        for name, prof, width in (("vdc_profile", self.vdc_profile, 2),
                                  ("reference_profile", self.reference_profile, 3)):
            if not prof or any(len(row) != width for row in prof):
                raise ConfigurationError(f"{name} rows must have {width} entries")
            times = [row[0] for row in prof]
            if times[0] != 0 or any(b <= a for a, b in zip(times, times[1:])):
                raise ConfigurationError(f"{name} must start at t=0 with increasing times")
        if any(row[1] <= 0 for row in self.vdc_profile):
            raise ConfigurationError("vdc must be > 0 at all times")
        if self.reference_mode not in ("current", "power"):
            raise ConfigurationError("reference_mode must be 'current' or 'power'")
        if self.log_decimation < 1 or self.thd_window < 1:
            raise ConfigurationError("log_decimation and thd_window must be >= 1")
        if self.controller.kind == FOFPI:
            for fis in self.fis_pair():
                fis.validate()
        if self.u_max() <= 0:
            raise ConfigurationError("u_max must be > 0")

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, It2Fis):
        return _plain(obj.__dict__)
    return obj


@dataclass
class RunLog:
    columns: tuple
    data: np.ndarray
    fingerprint: str
    dt_log: float
    fault: dict = None
    diagnostics: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def __getitem__(self, name) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self["t"]

    @property
    def ok(self) -> bool:
        return self.fault is None

    def digest(self) -> str:
        """Hash of every logged value, for bitwise reproducibility checks."""
        h = hashlib.sha256(self.fingerprint.encode())
        h.update(np.ascontiguousarray(self.data).tobytes())
        return h.hexdigest()[:16]

    def to_csv(self, path):
        np.savetxt(path, self.data, delimiter=",", header=",".join(self.columns),
                   comments="", fmt="%.10g")


# -- kernels ----------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def rk4_kernel(x, du, dl, L, R, C, vdc, vg_amp, omega, scale, t, dt, work, acc):
    """One classical RK4 step with duties held; ``acc`` accumulates
    (dc energy, loss energy, ac energy, |dc| throughput)."""
    k1, k2, k3, k4, tmp = work[0], work[1], work[2], work[3], work[4]
    vg = np.empty(3)
    h = 0.5 * dt
    grid_voltages(vg_amp, omega, scale, t, vg)
    derivatives_kernel(x, du, dl, L, R, C, vdc, vg, k1)
    p1 = power_kernel(x, R, vdc, vg)
    tmp[:, :] = x + h * k1
    grid_voltages(vg_amp, omega, scale, t + h, vg)
    derivatives_kernel(tmp, du, dl, L, R, C, vdc, vg, k2)
    p2 = power_kernel(tmp, R, vdc, vg)
    tmp[:, :] = x + h * k2
    derivatives_kernel(tmp, du, dl, L, R, C, vdc, vg, k3)
    p3 = power_kernel(tmp, R, vdc, vg)
    tmp[:, :] = x + dt * k3
    grid_voltages(vg_amp, omega, scale, t + dt, vg)
    derivatives_kernel(tmp, du, dl, L, R, C, vdc, vg, k4)
    p4 = power_kernel(tmp, R, vdc, vg)
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    w = dt / 6.0
    acc[0] += w * (p1[0] + 2.0 * p2[0] + 2.0 * p3[0] + p4[0])
    acc[1] += w * (p1[1] + 2.0 * p2[1] + 2.0 * p3[1] + p4[1])
    acc[2] += w * (p1[2] + 2.0 * p2[2] + 2.0 * p3[2] + p4[2])
    acc[3] += w * (abs(p1[0]) + 2.0 * abs(p2[0]) + 2.0 * abs(p3[0]) + abs(p4[0]))


@numba.njit(cache=True, nogil=True)
def _lookup(times, values, t):
    i = 0
    for j in range(times.shape[0]):
        if times[j] <= t + 1e-12:
            i = j
    return values[i]


@numba.njit(cache=True, nogil=True)
def closed_loop_kernel(x, n_ticks, n_sub, dt_sim, dt_ctrl,
                       L, R, C, vg_amp, omega, vg_scale,
                       vdc_t, vdc_v, ref_t, ref_a, ref_b, ref_is_power,
                       fuzzy, kp_fixed, ki_fixed, fg, fd, fgain, fstate,
                       centers, sig_l, sig_u, th_kp, th_ki, blend, scales,
                       u_max, tau_d, feedforward, balance, i_limit, v_limit,
                       log, acc):
    n = (x.shape[1] - 2) // 2
    du = np.empty((3, n))
    dl = np.empty((3, n))
    work = np.empty((5, 3, x.shape[1]))
    vg = np.empty(3)
    vref = np.empty(3)
    emf = np.empty(3)
    m = th_kp.shape[1]
    xi_u = np.empty(m)
    xi_l = np.empty(m)
    err = np.zeros(2)
    prev_err = np.zeros(2)
    de_f = np.zeros(2)
    prev_u = np.zeros(2)
    kp = np.zeros(2)
    ki = np.zeros(2)
    u = np.zeros(2)
    clamps = 0
    underflows = 0
    for k in range(n_ticks + 1):
        t = k * dt_ctrl
        vdc = _lookup(vdc_t, vdc_v, t)
        theta = omega * t
        i_a = x[0, 0] - x[0, 1]
        i_b = x[1, 0] - x[1, 1]
        i_c = x[2, 0] - x[2, 1]
        i_d, i_q = park(i_a, i_b, i_c, theta)
        grid_voltages(vg_amp, omega, vg_scale, t, vg)
        v_d, v_q = park(vg[0], vg[1], vg[2], theta)
        ra = _lookup(ref_t, ref_a, t)
        rb = _lookup(ref_t, ref_b, t)
        if ref_is_power:
            if abs(v_d) <= 1.0:
                return k, FAULT_REFERENCE, t, clamps, underflows
            id_ref = (2.0 / 3.0) * ra / v_d
            iq_ref = -(2.0 / 3.0) * rb / v_d
        else:
            id_ref = ra
            iq_ref = rb
        err[0] = id_ref - i_d
        err[1] = iq_ref - i_q
        for ax in range(2):
            e = err[ax]
            de_f[ax] = derivative_filter(e, prev_err[ax], de_f[ax], dt_ctrl, tau_d)
            if fuzzy:
                kp[ax], ki[ax], uf = schedule_kernel(
                    centers[ax], sig_l[ax], sig_u[ax], th_kp[ax], th_ki[ax], blend[ax],
                    scales[ax], e, de_f[ax], xi_u, xi_l)
                if uf:
                    underflows += 1
            else:
                kp[ax] = kp_fixed[ax]
                ki[ax] = ki_fixed[ax]
            u[ax] = pi_law(kp[ax], ki[ax], e, prev_u[ax], u_max,
                           fg[ax], fd[ax], fstate[ax], fgain[ax])
            prev_err[ax] = e
            prev_u[ax] = u[ax]
        if feedforward:
            inverse_park(u[0] + v_d, u[1] + v_q, theta, vref)
        else:
            inverse_park(u[0], u[1], theta, vref)
        clamps += modulate_kernel(vref, vdc, du, dl)
        if balance:
            balance_kernel(x, du, dl)
        converter_emf(x, du, dl, emf)

        row = log[k]
        row[0] = t
        row[1] = vdc
        for ph in range(3):
            row[2 + ph] = x[ph, 0]
            row[5 + ph] = x[ph, 1]
            row[8 + ph] = x[ph, 0] - x[ph, 1]
            row[11 + ph] = 0.5 * (x[ph, 0] + x[ph, 1])
        row[14] = emf[0] - emf[1]
        row[15] = emf[1] - emf[2]
        row[16] = emf[2] - emf[0]
        row[17] = i_d
        row[18] = i_q
        row[19] = id_ref
        row[20] = iq_ref
        for ax in range(2):
            row[21 + 4 * ax] = err[ax]
            row[22 + 4 * ax] = kp[ax]
            row[23 + 4 * ax] = ki[ax]
            row[24 + 4 * ax] = u[ax]
        c = 29
        for side in range(2):
            for ph in range(3):
                seg = x[ph, 2 + side * n:2 + (side + 1) * n]
                row[c] = seg.mean()
                row[c + 1] = seg.min()
                row[c + 2] = seg.max()
                c += 3
        row[c] = stored_energy(x, L, C)
        row[c + 1] = acc[0]
        row[c + 2] = acc[1]
        row[c + 3] = acc[2]

        if k == n_ticks:
            break
        for s in range(n_sub):
            rk4_kernel(x, du, dl, L, R, C, vdc, vg_amp, omega, vg_scale,
                       t + s * dt_sim, dt_sim, work, acc)
        t_next = (k + 1) * dt_ctrl
        for ph in range(3):
            for j in range(x.shape[1]):
                v = x[ph, j]
                if not np.isfinite(v):
                    return k + 1, FAULT_NONFINITE, t_next, clamps, underflows
                if j < 2:
                    if abs(v) > i_limit:
                        return k + 1, FAULT_DIVERGED, t_next, clamps, underflows
                elif abs(v) > v_limit:
                    return k + 1, FAULT_DIVERGED, t_next, clamps, underflows
    return n_ticks + 1, FAULT_NONE, -1.0, clamps, underflows


# -- python API -------------------------------------------------------------

def rk4_step(state: MmcState, duties: ArmDuties, params: MmcParams, t, dt, vdc=None) -> MmcState:
    """Classical RK4 step of the plant with duties held over the step."""
    if not dt > 0:
        raise ConfigurationError("dt must be > 0")
    x = state.x.copy()
    work = np.empty((5,) + x.shape)
    acc = np.zeros(4)
    rk4_kernel(x, duties.d_upper, duties.d_lower, params.L, params.R, params.C,
               params.vdc if vdc is None else float(vdc), params.grid_amplitude,
               params.grid_freq, np.asarray(params.grid_phase_scale, float),
               float(t), float(dt), work, acc)
    if not np.all(np.isfinite(x)):
        raise SimulationFault(f"non-finite state at t={t + dt:.6g} s", t + dt)
    return MmcState(x)


def _controller_arrays(sc: Scenario):
    c = sc.controller
    if c.kind == FOPI:
        alphas = (c.fopi_d.alpha, c.fopi_q.alpha)
        kp_fixed = np.array([c.fopi_d.kp, c.fopi_q.kp])
        ki_fixed = np.array([c.fopi_d.ki, c.fopi_q.ki])
    else:
        alphas = (c.alpha, c.alpha)
        kp_fixed = np.zeros(2)
        ki_fixed = np.zeros(2)
    filters = [fractional_integrator(a, sc.dt_ctrl, c.n_filter, c.band) for a in alphas]
    fis = sc.fis_pair()
    return dict(
        fuzzy=c.kind == FOFPI, kp_fixed=kp_fixed, ki_fixed=ki_fixed,
        fg=np.stack([f.g for f in filters]), fd=np.stack([f.d for f in filters]), fgain=np.array([f.gain for f in filters]),
        fstate=np.zeros((2, filters[0].n_sections)),
        centers=np.stack([f.centers for f in fis]), sig_l=np.stack([f.sigma_lower for f in fis]),
        sig_u=np.stack([f.sigma_upper for f in fis]), th_kp=np.stack([f.theta_kp for f in fis]),
        th_ki=np.stack([f.theta_ki for f in fis]), blend=np.array([f.blend_m for f in fis]),
        scales=np.stack([f.input_scales for f in fis]))


def run_scenario(sc: Scenario, summarize=True) -> RunLog:
    """Run the closed loop; faults return a partial log instead of raising."""
    sc.validate()
    p = sc.plant
    x = MmcState.precharged(p, sc.vdc0).x
    vdc = np.array(sc.vdc_profile, dtype=float)
    ref = np.array(sc.reference_profile, dtype=float)
    n_ticks = sc.n_ticks
    log = np.zeros((n_ticks + 1, N_COLUMNS))
    acc = np.zeros(4)
    vc_nominal = max(vdc[:, 1]) / p.n_cells
    n_rows, code, t_fault, clamps, underflows = closed_loop_kernel(
        x, n_ticks, sc.n_sub, sc.dt_sim, sc.dt_ctrl,
        p.L, p.R, p.C, p.grid_amplitude, p.grid_freq, np.asarray(p.grid_phase_scale, float),
        vdc[:, 0].copy(), vdc[:, 1].copy(), ref[:, 0].copy(), ref[:, 1].copy(),
        ref[:, 2].copy(), sc.reference_mode == "power",
        **_controller_arrays(sc),
        u_max=sc.u_max(), tau_d=sc.tau_d(), feedforward=bool(sc.controller.feedforward),
        balance=bool(sc.balance_sort),
        i_limit=sc.divergence_factor * sc.i_rated, v_limit=sc.divergence_factor * vc_nominal,
        log=log, acc=acc)
    data = log[:n_rows:sc.log_decimation].copy()
    fault = None
    if code != FAULT_NONE:
        overflow = float(np.max(np.abs(x))) if np.all(np.isfinite(x)) else float("inf")
        fault = {"t": float(t_fault), "kind": FAULT_NAMES[code], "code": int(code),
                 "max_abs_state": overflow}
    diagnostics = {"overmodulation_clamps": int(clamps), "fis_underflows": int(underflows),
                   "energy_dc": float(acc[0]), "energy_loss": float(acc[1]),
                   "energy_ac": float(acc[2]), "dc_throughput": float(acc[3]),
                   "final_state": x}
    runlog = RunLog(tuple(COLUMNS), data, sc.fingerprint(), sc.dt_ctrl * sc.log_decimation,
                    fault, diagnostics)
    if summarize:
        runlog.summary = summarize_run(runlog, sc)
    return runlog


def energy_residual(runlog: RunLog) -> float:
    """|change in stored energy - (dc in - losses - ac out)| / dc throughput."""
    delta = {name: runlog[name][-1] - runlog[name][0]
             for name in ("energy_stored", "energy_dc", "energy_loss", "energy_ac")}
    net = delta["energy_dc"] - delta["energy_loss"] - delta["energy_ac"]
    return abs(delta["energy_stored"] - net) / runlog.diagnostics["dc_throughput"]


def segments(sc: Scenario):
    """``(start, end)`` time spans of constant DC-link voltage."""
    times = [row[0] for row in sc.vdc_profile] + [sc.duration]
    return [(a, b) for a, b in zip(times, times[1:]) if b > a]


def window_indices(runlog: RunLog, sc: Scenario, start, end):
    """Row slice for the last ``thd_window`` grid cycles of ``[start, end)``."""
    t = runlog.t
    per_cycle = 1.0 / (sc.plant.f0 * runlog.dt_log)
    n = int(round(sc.thd_window * per_cycle))
    last = end >= sc.duration - 1e-12
    stop = np.searchsorted(t, end + (1e-9 if last else -1e-9), side="right" if last else "left")
    first = np.searchsorted(t, start - 1e-9)
    if stop - n < first:
        return None
    return slice(stop - n, stop)


def summarize_run(runlog: RunLog, sc: Scenario) -> dict:
    out = {"fingerprint": runlog.fingerprint, "digest": runlog.digest(), "segments": []}
    if runlog.fault:
        out["fault"] = runlog.fault
    f0 = sc.plant.f0
    for start, end in segments(sc):
        seg = {"t_start": start, "t_end": end}
        idx = window_indices(runlog, sc, start, end)
        if idx is None:
            seg["thd_error"] = "segment shorter than the analysis window or run faulted"
        else:
            try:
                seg["thd"] = thd(runlog["v_ll_ab"][idx], 1.0 / runlog.dt_log, f0).as_dict()
            except AnalysisError as exc:
                seg["thd_error"] = str(exc)
            for axis in "dq":
                e = runlog[f"e_{axis}"][idx]
                seg[f"rms_error_{axis}"] = float(np.sqrt(np.mean(e ** 2)))
                seg[f"mean_i_{axis}"] = float(np.mean(runlog[f"i_{axis}"][idx]))
        out["segments"].append(seg)
    for axis in "dq":
        for g in ("kp", "ki"):
            col = runlog[f"{g}_{axis}"]
            if len(col):
                out[f"{g}_{axis}_min"] = float(col.min())
                out[f"{g}_{axis}_max"] = float(col.max())
    if len(runlog.data) > 1:
        out["energy_residual"] = energy_residual(runlog)
    return out
