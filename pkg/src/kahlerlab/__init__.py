"""kahlerlab: exact toric K-stability numerics, pluripotential estimators,
radial Monge–Ampère / Kähler–Ricci flow solvers and Weil–Petersson geometry
of one-parameter families."""

from .errors import (ContinuityPathError, EstimateUnstableError, FitError, FlowInstabilityError,
                     FlowSingularityError, KahlerLabError, NonConvergenceError, ObstructionSuspectedError,
                     ValidationError)

__version__ = "0.1.0"

__all__ = ["ContinuityPathError", "EstimateUnstableError", "FitError", "FlowInstabilityError",
           "FlowSingularityError", "KahlerLabError", "NonConvergenceError", "ObstructionSuspectedError",
           "ValidationError", "__version__"]
