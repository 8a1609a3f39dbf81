"""Shared exception and warning types."""


class FormatError(ValueError):
    """A file or payload is syntactically readable but violates its schema."""


class ValidationError(ValueError):
    """A request payload violates a domain invariant.

    Carries per-item diagnostics so callers can report every problem at once.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class DegenerateFitError(RuntimeError):
    """Box fitting had too few usable points or collapsed to a sliver."""


class NotFoundError(KeyError):
    """Requested frame or resource does not exist in the dataset."""


class UpstreamDataError(RuntimeError):
    """A frame's source files exist but could not be read or parsed."""


class DataWarning(UserWarning):
    """Recoverable data-quality issue (dropped points, clamped scores)."""


class CalibrationMismatchWarning(DataWarning):
    """Every forward-facing 3D box fell outside the camera while 2D
    detections exist; the calibration or inputs are probably inconsistent."""
