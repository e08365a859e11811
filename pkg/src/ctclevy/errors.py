"""Exception hierarchy shared by every module.

Validation problems map to CLI exit code 2, numerical failures to exit code 3.
"""


class CtcError(Exception):
    """Base class for all package errors."""


class ValidationError(CtcError, ValueError):
    """Invalid parameters, inputs or configuration."""


class DomainError(ValidationError):
    """Argument outside the analyticity strip of a characteristic exponent."""


class NumericalError(CtcError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy value."""


class MomentExplosionError(NumericalError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class IntegrationError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TruncationError(NumericalError):
    """A truncation range is too narrow for the requested accuracy."""


class NoSolutionError(NumericalError):
    """Implied-volatility inversion has no solution inside the bracket."""


class StateRegionError(NumericalError):
    """A state falls outside the region where the VIX radicand is nonnegative."""


class GridExtensionError(NumericalError):
    """A lookup falls beyond a precomputed grid."""


class ForwardUnavailableError(ValidationError):
    """No call/put pair is available to infer a forward."""


class UndefinedStatisticError(ValidationError):
    """A statistic is undefined for the given data (for example zero variance)."""
