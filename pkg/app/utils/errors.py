from typing import Optional, Any


class IrlError(Exception):
    """Base class for every error raised by the IRL toolkit"""


class InvalidArgumentError(IrlError, ValueError):
    """Input violates a documented precondition (shape, symmetry, sign)"""


class StabilityViolationError(IrlError):
    """A matrix required to be Hurwitz is not"""


class NumericFailureError(IrlError):
    """A computation produced a non-finite value or missed its residual tolerance"""


class NoSolutionError(IrlError):
    """No stabilizing positive definite Riccati solution was found"""


class DivergenceError(IrlError):
    """A simulation or iteration blew past its bound

    Attributes:
        trace: Partial iteration trace collected before divergence, if any
    """

    def __init__(self, message: str, trace: Optional[Any] = None):
        super().__init__(message)
        self.trace = trace


class RankDeficientError(IrlError):
    """A regression matrix does not have full column rank

    Attributes:
        required: Column count that must be reached
        observed: Numerical rank actually found
    """

    def __init__(self, message: str, required: int, observed: int):
        super().__init__(f"{message} (rank {observed} < required {required}, "
                         f"short by {required - observed})")
        self.required = required
        self.observed = observed


class ConfigError(IrlError, ValueError):
    """Scenario configuration could not be parsed or validated

    Attributes:
        field: Dotted key of the offending field, if known
        line: 1-based line number in the source file, if known
    """

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if field:
            location += f" [field: {field}]"
        if line:
            location += f" [line: {line}]"
        super().__init__(f"{message}{location}")
        self.field = field
        self.line = line


class RunFailedError(IrlError):
    """A scenario stage raised after some artifacts were already written

    Attributes:
        failure: RunFailure row describing the stage, error kind and last iteration
    """

    def __init__(self, message: str, failure: Any):
        super().__init__(message)
        self.failure = failure
