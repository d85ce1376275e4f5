"""Brownian motion conditioned to stay in a domain, and coalescing flows built from it."""

__version__ = "0.1.0"

from .analytic import (Box, DriftSpec, HalfLine, HalfSpace, Interval, Wedge2, exit_prob,
                       grad_log_exit_prob, log_exit_prob)
from .errors import (AttemptsExhausted, ExitFailure, NonFiniteDrift, NotCoalesced,
                     SimulationError)
from .rng import RngStream

__all__ = ["Box", "DriftSpec", "HalfLine", "HalfSpace", "Interval", "Wedge2", "exit_prob",
           "grad_log_exit_prob", "log_exit_prob", "AttemptsExhausted", "ExitFailure",
           "NonFiniteDrift", "NotCoalesced", "SimulationError", "RngStream", "__version__"]
