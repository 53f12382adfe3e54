"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: validation problems exit 2, solver
non-convergence exits 3, anything else exits 4.
"""


class KahlerLabError(Exception):
    """Base class for every error raised by the package."""

    reason = "internal-error"


class ValidationError(KahlerLabError, ValueError):
    reason = "validation-failed"


class UnsupportedDimensionError(ValidationError):
    reason = "unsupported-dimension"


class DegeneratePolytopeError(ValidationError):
    reason = "degenerate-polytope"


class ModelUndefinedError(ValidationError):
    reason = "model-undefined"


class StencilError(ValidationError):
    reason = "insufficient-stencil"


class NonConvergenceError(KahlerLabError):
    """A numerical solver failed to reach its tolerance."""

    reason = "non-convergence"


class FitError(NonConvergenceError):
    """Exact interpolation disagreed with a held-out sample."""

    reason = "fit-inconsistent"


class EstimateUnstableError(NonConvergenceError):
    reason = "estimate-unstable"


class ObstructionSuspectedError(NonConvergenceError):
    reason = "obstruction-suspected"


class FlowSingularityError(NonConvergenceError):
    reason = "flow-singularity"

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ContinuityPathError(NonConvergenceError):
    """Newton failed at some ε; carries the partial result."""

    reason = "continuity-path-failed"

    def __init__(self, message, failure_index, partial=None):
        super().__init__(message)
        self.failure_index = failure_index
        self.partial = partial


class FlowInstabilityError(NonConvergenceError):
    """Requested time step exceeds the stepper's declared stability bound."""

    reason = "flow-instability"
