"""Exceptions raised by the samplers and simulators."""


class SimulationError(RuntimeError):
    """Base class for failures of a stochastic simulation (CLI exit code 3)."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ExitFailure(SimulationError):
    """The integrator could not keep the path inside its domain.

    Usually means the time grid is too coarse near a singular boundary.
    """


class NonFiniteDrift(SimulationError):
    """A drift evaluation overflowed or produced NaN."""


class AttemptsExhausted(SimulationError):
    """A rejection sampler hit its attempt budget without an accepted path."""


class NotCoalesced(SimulationError):
    """More than one particle survived where full coalescence was required."""
