"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or configuration detected before any compute."""


class SimulationFault(RuntimeError):
    """Non-finite or divergent state during a simulation.

    ``t`` holds the simulation time (s) at which the fault was detected.
    """

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class AnalysisError(ValueError):
    """Signal cannot be analysed (too short, degenerate fundamental, ...)."""


class ReferenceFault(ValueError):
    """Reference generation impossible, e.g. grid voltage collapsed."""
