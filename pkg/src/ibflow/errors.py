"""Exception types raised across the package."""


class IBFlowError(ValueError):
    """Base class for all package errors."""


class InsufficientSamplesError(IBFlowError):
    pass


class ConvergenceError(IBFlowError):
    pass


class DegenerateSpectrumError(IBFlowError):
    pass


class DivergenceError(IBFlowError):
    """A critic or estimator produced a non-finite value."""


class DumpFormatError(IBFlowError):
    """A representation dump on disk is missing or malformed."""
