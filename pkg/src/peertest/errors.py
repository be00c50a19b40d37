"""Exception types shared across the package.

Two families matter to callers (and to the CLI's exit codes): problems with
the *input data* (``ValidationError``) and problems that arise *numerically*
while running a test (``NumericalError``).
"""


class PeertestError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(PeertestError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(PeertestError, ArithmeticError):
    """A computation cannot proceed (rank collapse, non-positive variance, ...)."""


# --- input validation ------------------------------------------------------

class DimensionMismatch(ValidationError):
    """Array shapes are inconsistent with the declared panel dimensions."""


class NonFiniteValue(ValidationError):
    """NaN or infinity encountered where a finite value is required."""


class UnbalancedPanel(ValidationError):
    """The unit-by-period grid is incomplete or the dimensions are too small."""


class InstanceTooLarge(ValidationError):
    """A dense test-oracle routine was asked for an instance above its cap."""


class MissingCell(ValidationError):
    """A (unit, time) pair is absent from the input file."""


class DuplicateCell(ValidationError):
    """A (unit, time) pair appears more than once in the input file."""


class NonNumericValue(ValidationError):
    """A data column contains a value that cannot be parsed as a number."""


# --- numerical failures ----------------------------------------------------

class DegenerateX(NumericalError):
    """A regressor column is numerically zero (or the regressors are rank deficient)."""


class TooManyInstruments(NumericalError):
    """The instrument count reaches or exceeds the (effective) sample size."""


class RankCollapse(NumericalError):
    """A matrix presented as full rank lost rank during factorization."""


class NonPositivePhi(NumericalError):
    """The estimated variance of the test statistic is not positive."""


class WeakOrCollinearIV(NumericalError):
    """The instrument for the peer lag is numerically collinear with the regressors."""


class SingularSystem(NumericalError):
    """The simultaneous outcome system (I - A) is singular or near singular."""
