"""Exception hierarchy shared by the numerical and asymptotic layers."""


class CarrierError(Exception):
    """Base class for all errors raised by this package."""


class SingularJacobianError(CarrierError):
    """A linear solve hit a pivot below threshold (likely a critical point)."""


class DeflationCollisionError(CarrierError):
    """The iterate coincides exactly with a deflated (known) solution."""


class DomainError(CarrierError, ValueError):
    """An asymptotic quantity was requested outside its domain of definition."""


class ComplexRootsError(DomainError):
    """The cubic c(A, x, .) does not have three real roots."""


class TurningPointError(DomainError):
    """The period function collapses (A >= A1(x)); the oscillation has a turning point."""

    def __init__(self, message: str, x: float | None = None):
        super().__init__(message)
        self.x = x


class NoSolutionError(DomainError):
    """A defining condition has no root in the admissible range."""


class ConvergenceError(CarrierError):
    """An iterative solver failed to converge."""


class ConfigError(CarrierError, ValueError):
    """Invalid run configuration."""


class CorruptRecordError(CarrierError, ValueError):
    """A database line could not be parsed or failed validation."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message if line_number is None else f"line {line_number}: {message}")
        self.line_number = line_number
