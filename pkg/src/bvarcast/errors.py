"""Exception types raised across the package."""


class BvarcastError(Exception):
    """Base class for all package errors."""


class DataError(BvarcastError, ValueError):
    """Malformed or inconsistent input data."""

    def __init__(self, message, *, series=None, date=None, line=None):
        super().__init__(message)
        self.series = series
        self.date = date
        self.line = line


class NotPositiveDefiniteError(BvarcastError, ValueError):
    """Cholesky factorization failed; ``pivot`` is the 0-based failing column."""

    def __init__(self, pivot):
        super().__init__(f"matrix is not positive definite (failing pivot {pivot})")
        self.pivot = pivot


class FilterDivergenceError(BvarcastError, FloatingPointError):
    """Kalman filter produced a non-finite or non-positive variance."""


class SamplerError(BvarcastError, RuntimeError):
    """An MCMC sampler could not complete."""


class SchemaError(BvarcastError, ValueError):
    """A stored forecast file does not match the expected layout."""

    def __init__(self, message, *, field=None):
        super().__init__(message)
        self.field = field
