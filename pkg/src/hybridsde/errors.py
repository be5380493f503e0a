"""Exception hierarchy shared across the package."""

import numpy as np


class HybridSDEError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HybridSDEError, ValueError):
    """Array shapes are inconsistent with the requested operation."""


class DomainError(HybridSDEError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularMatrixError(HybridSDEError, np.linalg.LinAlgError):
    """A matrix that must be invertible is numerically singular."""


class ConvergenceError(HybridSDEError, ArithmeticError):
    """An iterative method failed to converge within its budget."""


class StabilizabilityError(HybridSDEError, ArithmeticError):
    """The computed feedback does not stabilize the closed loop."""


class GridError(DomainError):
    """Horizon, step and sampling period are not commensurate."""
