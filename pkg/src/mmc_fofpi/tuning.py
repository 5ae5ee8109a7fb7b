"""Controller tuning: flat parameter encodings and the THD fitness.

FOPI vector (6): ``[kp_d, ki_d, alpha_d, kp_q, ki_q, alpha_q]``.

FOFPI vector (38 with a 3x3 rule base): for each input (error, then error
derivative) and each MF ``(center, sigma_lower, sigma_upper)``; then the
``kp`` consequents, the ``ki`` consequents, ``blend_m`` and the integral
order ``alpha``. Both axes get their own FIS instance built from the same
parameters.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from .controllers import FopiParams
from .errors import AnalysisError, ConfigurationError
from .it2fis import N_INPUTS, It2Fis, default_input_scales
from .signals import thd
from .simkit import FOFPI, FOPI, Scenario, run_scenario, window_indices
from .woa import WoaParams, optimize

FAULT_PENALTY = 1e3
MAX_OVERFLOW = 1e9


# wide enough that the discrete stability edge (kp ~ 2 L_ac / dt_ctrl) lies
# inside the box for the default plant
def fopi_bounds(kp=(0.0, 100.0), ki=(0.0, 1e5), alpha=(0.05, 1.9)):
    return np.array([kp, ki, alpha] * 2, dtype=float)


def fofpi_bounds(n_mf=3, center=(-1.0, 1.0), sigma=(0.05, 1.0), kp=(0.0, 100.0),
                 ki=(0.0, 1e5), blend=(0.0, 1.0), alpha=(0.05, 1.9)):
    rows = [center, sigma, sigma] * (N_INPUTS * n_mf)
    rows += [kp] * n_mf ** N_INPUTS + [ki] * n_mf ** N_INPUTS + [blend, alpha]
    return np.array(rows, dtype=float)


@dataclass
class TuningSpec:
    """What to tune, on which scenario, and how candidates are scored."""

    kind: str
    scenario: Scenario
    bounds: np.ndarray = None
    n_mf: int = 3
    sigma_penalty: float = 0.01
    tracking_tolerance: float = 0.02
    tracking_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in (FOPI, FOFPI):
            raise ConfigurationError(f"unknown controller kind {self.kind!r}")
        if self.bounds is None:
            self.bounds = fopi_bounds() if self.kind == FOPI else fofpi_bounds(self.n_mf)
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.shape[0] == 0:
            raise ConfigurationError("search space has zero dimensions")
        if self.bounds.shape[0] != self.dim:
            raise ConfigurationError(f"{self.kind} needs {self.dim} bounds, got {self.bounds.shape[0]}")

    @property
    def dim(self) -> int:
        return 6 if self.kind == FOPI else 3 * N_INPUTS * self.n_mf + 2 * self.n_mf ** 2 + 2


def decode(vec, spec: TuningSpec):
    """Build the controller config for ``vec``; returns ``(controller, penalty)``.

    Out-of-order sigmas are swapped and charged ``sigma_penalty`` per unit of
    violation.
    """
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (spec.dim,):
        raise ConfigurationError(f"expected {spec.dim} parameters, got {vec.shape}")
    ctrl = copy.deepcopy(spec.scenario.controller)
    if spec.kind == FOPI:
        ctrl = replace(ctrl, kind=FOPI, fopi_d=FopiParams(*vec[0:3]), fopi_q=FopiParams(*vec[3:6]))
        return ctrl, 0.0
    n = spec.n_mf
    mfs = vec[:3 * N_INPUTS * n].reshape(N_INPUTS, n, 3).copy()
    lo, hi = mfs[..., 1], mfs[..., 2]
    violation = float(np.sum(np.maximum(lo - hi, 0.0)))
    mfs[..., 1], mfs[..., 2] = np.minimum(lo, hi), np.maximum(lo, hi)
    order = np.argsort(mfs[..., 0], axis=1, kind="stable")
    mfs = np.take_along_axis(mfs, order[..., None], axis=1)
    off = 3 * N_INPUTS * n
    m = n ** N_INPUTS
    sc = spec.scenario
    scales = default_input_scales(sc.i_rated, sc.dt_ctrl)

    def build():
        return It2Fis(mfs[..., 0], mfs[..., 1], mfs[..., 2], vec[off:off + m],
                      vec[off + m:off + 2 * m], float(vec[off + 2 * m]), scales)

    ctrl = replace(ctrl, kind=FOFPI, fis_d=build(), fis_q=build(), alpha=float(vec[-1]))
    return ctrl, spec.sigma_penalty * violation


def score_run(runlog, sc: Scenario, spec: TuningSpec = None) -> float:
    """THD of the steady-state line-line voltage plus fault/tracking penalties."""
    if runlog.fault is not None:
        return FAULT_PENALTY + min(runlog.fault["max_abs_state"], MAX_OVERFLOW)
    idx = window_indices(runlog, sc, 0.0, sc.duration)
    try:
        value = thd(runlog["v_ll_ab"][idx], 1.0 / runlog.dt_log, sc.plant.f0).thd
    except AnalysisError:
        return FAULT_PENALTY
    if spec is not None:
        err = np.sqrt(np.mean(runlog["e_d"][idx] ** 2 + runlog["e_q"][idx] ** 2)) / sc.i_rated
        value += spec.tracking_weight * max(0.0, err - spec.tracking_tolerance)
    return float(value)


def evaluate_candidate(vec, spec: TuningSpec) -> float:
    """Fitness of one parameter vector; every failure maps to a finite penalty."""
    ctrl, penalty = decode(vec, spec)
    sc = replace(spec.scenario, controller=ctrl)
    return score_run(run_scenario(sc, summarize=False), sc, spec) + penalty


def tune(spec: TuningSpec, woa: WoaParams = None, progress_sink=None, n_workers=1, **woa_kw):
    """Run WOA over ``spec``; returns ``(result, best_controller)``."""
    if woa is None:
        woa = WoaParams(spec.bounds, **woa_kw)
    result = optimize(lambda x: evaluate_candidate(x, spec), woa, progress_sink, n_workers)
    ctrl, _ = decode(result.best_x, spec)
    return result, ctrl
