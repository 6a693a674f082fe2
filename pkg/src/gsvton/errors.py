"""Exception types raised across the engine."""


class GsvtonError(Exception):
    """Base class for all engine errors."""


class InvalidParameterError(GsvtonError, ValueError):
    """An argument violates an operation precondition (non-finite, out of range, ...)."""


class DimensionMismatchError(InvalidParameterError):
    """Two images / maps that must share dimensions do not."""


class DegenerateCovarianceError(GsvtonError):
    """Covariance matrix is singular or too ill-conditioned to invert."""


class ManifestError(GsvtonError):
    """Dataset manifest is malformed, inconsistent, or references missing files."""


class StageImmutableError(GsvtonError):
    """Attempt to overwrite an immutable edit stage (the cached originals)."""


class MissingAuxError(GsvtonError):
    """A real image needs auxiliary inputs that are neither precomputed nor derivable."""


class EditorUnavailableError(GsvtonError):
    """The remote editing/detection service timed out or broke protocol."""
