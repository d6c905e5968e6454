"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ManivarError(Exception):
    """Base class for all package errors."""


class TagMismatchError(ManivarError):
    """Operands live on different manifolds (or have incompatible shapes)."""


class InvalidPointError(ManivarError):
    """Chart coordinates violate a point invariant of the manifold."""


class CutLocusError(ManivarError):
    """The logarithmic map was requested at (or too close to) the cut locus.

    ``indices`` holds the offending flat/grid indices when the operation ran
    pixel-wise, ``substep`` names the failing stage for composite operations
    such as the pole ladder.
    """

    def __init__(self, message: str, indices=None, substep: str | None = None):
        super().__init__(message)
        self.indices = indices
        self.substep = substep


class DegenerateGeodesicError(ManivarError):
    """A Jacobi frame was requested along a zero-length geodesic."""


class SingularCoefficientError(ManivarError):
    """A Jacobi coefficient hit a pole of its trigonometric quotient."""


class ConvergenceError(ManivarError):
    """An iteration failed to converge where convergence is contractual."""


class ScheduleError(ManivarError):
    """A step-size schedule violates the requirements of the algorithm."""


class ValidationError(ManivarError):
    """Invalid user-facing configuration, flag value, or file content."""
