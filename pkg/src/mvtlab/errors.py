"""Exception types shared across the package."""


class MVTError(Exception):
    """Base class for all mvtlab errors."""


class PreconditionError(MVTError, ValueError):
    """An operation was called outside its stated hypotheses."""


class CapacityError(MVTError):
    """A computation would exceed the configured memory budget or ceiling."""

    def __init__(self, message, *, estimate=None, budget=None, partial=None):
        super().__init__(message)
        self.estimate = estimate
        self.budget = budget
        self.partial = partial


class PrecisionError(MVTError, ValueError):
    """A window tolerance is too small for the fixed-point resolution."""


class SingularMatrixError(PreconditionError):
    """A matrix that must be invertible is numerically singular."""
