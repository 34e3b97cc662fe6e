"""Exception hierarchy shared by all solver modules."""


class FloerEigError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FloerEigError, ValueError):
    """Argument outside the domain where an operation is defined."""


class ParseError(FloerEigError, ValueError):
    """Malformed potential or result document."""


class PositivityError(FloerEigError):
    """E - V(t) is not strictly positive on the domain."""

    def __init__(self, margin, message=None):
        self.margin = margin
        super().__init__(message or f"positivity margin {margin:.6g} <= 0: E must exceed max V")


class NumericalOverflowError(FloerEigError, ArithmeticError):
    """Integration produced a non-finite state."""


class ConvergenceError(FloerEigError):
    """An iterative solver hit its iteration cap."""


class ScanRangeError(FloerEigError):
    """No bracket found in the scanned parameter range."""


class DegenerateMonodromyError(FloerEigError):
    """Monodromy eigenvector residual too large to plant an orbit."""


class DegenerateTrajectoryError(FloerEigError):
    """Trajectory has zero quadratic energy and cannot be rescaled."""


class DegenerateCriticalPointError(FloerEigError):
    """Newton Jacobian is numerically singular in a non-removable way."""


class ResolutionError(FloerEigError):
    """Angle tracking needs a finer time grid than the refinement budget allows."""


class ParityError(FloerEigError):
    """Doubled-orbit index is odd, so the chord index is undefined."""


class SymmetryError(FloerEigError):
    """Reflected chord does not join continuously with the original."""


class InvariantError(FloerEigError, AssertionError):
    """Internal invariant violated (never silently clamped)."""


class PreconditionError(FloerEigError, ValueError):
    """Input does not satisfy an operation's precondition."""
