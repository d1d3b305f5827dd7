"""Exception types shared across the package."""


class LatentGPError(Exception):
    """Base class for all package errors."""


class InvalidInput(LatentGPError):
    """Non-finite or otherwise malformed numeric input."""


class UnsupportedKernel(LatentGPError):
    """Kernel family / derivative-order / smoothness combination not implemented."""


class NotACovariance(LatentGPError):
    """Derivative orders that do not yield a positive-semidefinite kernel."""


class NotADensity(LatentGPError):
    """Derivative orders whose spectral product is not a valid density."""


class NumericallySingular(LatentGPError):
    """Cholesky factorization failed even after jitter escalation."""


class InvalidDomain(LatentGPError):
    """Degenerate input range for basis construction."""


class ShapeError(LatentGPError):
    """Array dimensions inconsistent with the model specification."""


class NonFiniteDensity(LatentGPError):
    """Log posterior evaluated to a non-finite value."""


class InitializationFailed(LatentGPError):
    """No finite starting point found after the allowed number of retries."""


class NameMismatch(LatentGPError):
    """Parameter names in draws do not line up with stored ground truth."""
