"""Exception hierarchy shared by every module of the toolkit."""


class AHError(Exception):
    """Base class for all toolkit errors."""

    #: Process exit code used by the command-line tool.
    exit_code = 3


class DomainError(AHError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 2


class RangeError(AHError, ValueError):
    """An evaluation point lies outside a grid or annulus."""


class InvalidConformalFactorError(AHError, ValueError):
    """A conformal factor is not strictly positive."""


class QuadratureError(AHError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class BracketError(AHError, ValueError):
    """Root bracket without a sign change."""


class SelectionError(AHError):
    """No admissible gluing interval was found."""

    def __init__(self, message, profile=None):
        super().__init__(message)
        self.profile = profile


class ConsistencyError(AHError):
    """Numerically impossible gluing data (wrong sign of A or B)."""


class GridError(AHError, ValueError):
    """A grid misses required nodes."""


class CurvatureViolationError(AHError):
    """Scalar curvature bound violated."""

    def __init__(self, message, location=None, margin=None):
        super().__init__(message)
        self.location = location
        self.margin = margin


class ConvergenceError(AHError):
    """Iterative solver failed to converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class MonotonicityError(AHError):
    """Sub/supersolution sandwich violated."""


class MatchingError(AHError):
    """Solution could not be matched to a family member."""

    def __init__(self, message, deviation=None):
        super().__init__(message)
        self.deviation = deviation


class PreconditionError(AHError, ValueError):
    """Hypotheses of an operation are not satisfied by the inputs."""


class ExtractionError(AHError):
    """Boundary coefficient extraction was unreliable."""


class GaugeError(AHError):
    """Collar gauge ODE failed."""


class UnsupportedBaseError(AHError, ValueError):
    """Linearization requested at a non-constant base surface."""


class StageError(AHError):
    """A pipeline stage failed; wraps the underlying error."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)


class ValidationError(AHError, ValueError):
    """A run configuration is invalid."""

    exit_code = 2
