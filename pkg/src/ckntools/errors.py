"""Exception hierarchy shared by every ckntools module."""


class CKNError(Exception):
    """Base class for all toolkit errors."""


class SingularMetric(CKNError, ValueError):
    """Metric factorization failed (not positive definite) at some point."""


class TooCloseToZeroSet(CKNError, ValueError):
    """A point is inside the excision neighbourhood of a zero of the field."""


class NonFiniteIntegrand(CKNError, FloatingPointError):
    """NaN or Inf produced by an integrand outside the excision balls."""


class BudgetExceeded(CKNError, RuntimeError):
    """Adaptive quadrature hit its depth or evaluation budget before rel_tol.

    The best available estimate is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SupportOutsideChart(CKNError, ValueError):
    pass


class DegenerateAnnulus(CKNError, ValueError):
    pass


class DivergenceNotPositive(CKNError, ValueError):
    pass


class NotConformalField(CKNError, ValueError):
    pass


class NotHomothety(CKNError, ValueError):
    pass


class NonIntegrableWeight(CKNError, ValueError):
    pass


class ParamConditionViolated(CKNError, ValueError):
    """Raised with the list of violated parameter conditions in ``violations``."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class ParameterOutOfRange(CKNError, ValueError):
    pass


class FitIllConditioned(CKNError, ValueError):
    pass


class ConfigError(CKNError, ValueError):
    pass
