"""Exception types raised across the package."""


class CovercertError(Exception):
    """Base class for all package errors."""


class NonFiniteEntry(CovercertError, ValueError):
    pass


class NotHermitian(CovercertError, ValueError):
    pass


class InvalidP(CovercertError, ValueError):
    pass


class NegativeEigenvalue(CovercertError, ValueError):
    pass


class DimMismatch(CovercertError, ValueError):
    pass


class SupportViolation(CovercertError, ValueError):
    pass


class ConvergenceError(CovercertError, RuntimeError):
    pass


class InvalidDistribution(CovercertError, ValueError):
    pass


class InvalidState(CovercertError, ValueError):
    pass


class ZeroReferenceWeight(CovercertError, ValueError):
    pass


class InvalidEps(CovercertError, ValueError):
    pass


class FactorizationViolation(CovercertError, ValueError):
    pass


class ParityError(CovercertError, ValueError):
    pass


class GraphError(CovercertError, ValueError):
    pass


class ExpanderResampleError(CovercertError, RuntimeError):
    pass


class LambdaOutOfRange(CovercertError, ValueError):
    pass


class ConfigError(CovercertError, ValueError):
    pass


class ValidationFailure(CovercertError, RuntimeError):
    """A bound from the theory was violated beyond Monte Carlo noise."""
