"""Exception types shared across the package.

The CLI maps these onto exit codes, so each class corresponds to one
failure category rather than one call site.
"""

from __future__ import annotations


class OobVimpError(Exception):
    """Base class for all package errors."""


class ConfigError(OobVimpError, ValueError):
    """Invalid user configuration (flags, parameters, preconditions)."""


class DataError(OobVimpError, ValueError):
    """Input data violates the schema or cannot be parsed."""


class DegenerateFitError(OobVimpError):
    """The information matrix is singular among the weighted rows.

    Attributes:
        columns: Indices of the columns found to be linearly dependent.
    """

    def __init__(self, message: str, columns: tuple[int, ...] = ()):
        super().__init__(message)
        self.columns = tuple(columns)


class UnusableReplicateError(OobVimpError):
    """A bootstrap replicate cannot be fitted (e.g. no events inbag)."""


class UndefinedErrorValue(OobVimpError):
    """Prediction error is undefined on the supplied rows."""


class AnalysisError(OobVimpError):
    """A whole analysis is degenerate, e.g. every replicate was unusable."""


class ReplicateTaskError(OobVimpError):
    """A per-replicate task raised; ``index_b`` names the replicate."""

    def __init__(self, index_b: int, cause: BaseException):
        super().__init__(f"replicate {index_b} failed: {cause}")
        self.index_b = index_b
        self.cause = cause
