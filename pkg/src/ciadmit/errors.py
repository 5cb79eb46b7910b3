"""Exception hierarchy shared by every module."""


class CiadmitError(Exception):
    """Base class for all package errors."""


class DomainError(CiadmitError, ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionError(DomainError):
    """Array shapes are inconsistent or the problem is underdetermined."""


class RankError(CiadmitError, ValueError):
    """The design matrix does not have full column rank."""


class GeometryError(CiadmitError, ValueError):
    """Focus and constraint vectors are (numerically) linearly dependent."""


class DegenerateDataError(CiadmitError, ValueError):
    """The data do not determine the interval (e.g. zero residual scale)."""


class IntervalSpecError(CiadmitError, ValueError):
    """An interval description violates the F(d) restrictions."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class EvaluationError(CiadmitError, ArithmeticError):
    """An integrand produced a non-finite value."""

    def __init__(self, message, abscissa=None):
        super().__init__(message)
        self.abscissa = abscissa


class AccuracyError(CiadmitError, ArithmeticError):
    """Two evaluations that should agree differ by more than the tolerance."""

    def __init__(self, message, first=None, second=None):
        super().__init__(message)
        self.first = first
        self.second = second
