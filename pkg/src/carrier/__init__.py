"""Numerical and asymptotic solutions of Carrier's problem.

    eps^2 y'' + 2 (1 - x^2) y + y^2 = 1,   y(-1) = y(1) = 0.
"""

from .errors import (
    CarrierError,
    ConfigError,
    ConvergenceError,
    CorruptRecordError,
    DeflationCollisionError,
    DomainError,
    NoSolutionError,
    SingularJacobianError,
    TurningPointError,
)
from .model import Grid, State, newton_solve

__version__ = "0.1.0"

__all__ = [
    "CarrierError",
    "ConfigError",
    "ConvergenceError",
    "CorruptRecordError",
    "DeflationCollisionError",
    "DomainError",
    "Grid",
    "NoSolutionError",
    "SingularJacobianError",
    "State",
    "TurningPointError",
    "newton_solve",
]
