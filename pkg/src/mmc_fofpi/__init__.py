"""Average-model MMC current control with fractional-order PI and
interval type-2 fuzzy gain scheduling, tuned by whale optimization."""

from .controllers import ControllerState, FopiParams, fofpi_step, fopi_step, make_state
from .errors import AnalysisError, ConfigurationError, ReferenceFault, SimulationFault
from .fracorder import (FracOperator, FracRealization, bode_table, design_oustaloup,
                        discretize, filter_signal, fractional_integrator, frequency_response, step_filter)
from .it2fis import It2Fis, It2Gaussian, default_fis, firing_strengths, infer, schedule_gains
from .mmcplant import ArmDuties, MmcParams, MmcState, derivatives, energy, modulate, outputs
from .signals import ThdReport, abc_to_dq, dq_to_abc, power_to_current_refs, thd
from .simkit import ControllerConfig, RunLog, Scenario, energy_residual, rk4_step, run_scenario
from .tuning import TuningSpec, evaluate_candidate, fofpi_bounds, fopi_bounds, tune
from .woa import WoaParams, WoaResult, optimize

__version__ = "0.1.0"
