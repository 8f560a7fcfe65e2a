"""Exception types shared across the package."""


class StiefelflowError(Exception):
    """Base class for all library errors."""


class DimensionError(StiefelflowError, ValueError):
    """Operands have incompatible shapes."""


class ContractViolationError(StiefelflowError, ValueError):
    """An input violates a documented precondition (infeasible point,
    non-skew generator, mismatched base points, ...)."""


class NumericalRankError(StiefelflowError):
    """A matrix is numerically rank-deficient where full rank is required."""


class ConfigurationError(StiefelflowError, ValueError):
    """Invalid configuration value (schedule parameters, step sizes, CLI keys)."""


class DivergedRunError(StiefelflowError):
    """A simulation or solve produced non-finite values.

    Carries the last finite iterate so callers can recover.
    """

    def __init__(self, message, last_point=None):
        super().__init__(message)
        self.last_point = last_point


class GraphParseError(StiefelflowError, ValueError):
    """Malformed graph file; ``line_number`` is 1-based."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class InitializationError(StiefelflowError):
    """A data-driven initializer (e.g. the eigenvector relaxation) failed."""
