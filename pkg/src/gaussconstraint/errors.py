"""Exception types raised by the truncation, filtering and simulation code."""


class GaussConstraintError(Exception):
    """Base class for all errors raised by this package.

    ``constraint_index`` and ``run_index`` are filled in by callers that fold
    over constraints or Monte Carlo runs, so the failing item can be located.
    """

    constraint_index = None
    run_index = None


class DomainError(GaussConstraintError, ValueError):
    pass


class ZeroMass(GaussConstraintError, ArithmeticError):
    """The constraint leaves (numerically) no probability mass."""


class NonConvergence(GaussConstraintError, ArithmeticError):
    pass


class NotSymmetric(GaussConstraintError, ValueError):
    pass


class NotPSD(GaussConstraintError, ValueError):
    pass


class DegenerateConstraint(GaussConstraintError, ValueError):
    """The constraint direction lies in the null space of the covariance."""


class DimensionMismatch(GaussConstraintError, ValueError):
    pass


class SingularInnovation(GaussConstraintError, ArithmeticError):
    pass


class NonTermination(GaussConstraintError, RuntimeError):
    pass


class ApproximationWarning(UserWarning):
    """Interval constraint bounds overlap enough to degrade the erf-product approximation."""
