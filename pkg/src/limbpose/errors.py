"""Exception types shared across the package.

The command line maps these onto process exit codes: usage problems exit
with 1, data and file-format problems with 2, numeric failures with 3.
"""

from __future__ import annotations


class LimbPoseError(Exception):
    """Base class for package-specific errors."""


class ShapeMismatchError(LimbPoseError, ValueError):
    """An array did not have the shape a function requires."""


class DegenerateConnectionError(LimbPoseError, ValueError):
    """Two connection endpoints coincide, so no segment geometry exists."""


class AnnotationError(LimbPoseError, ValueError):
    """A joint annotation violates its invariants."""


class DataFormatError(LimbPoseError, ValueError):
    """A file or record does not match the expected schema."""


class CheckpointError(DataFormatError):
    """A checkpoint file is unreadable or was saved for another network."""


class NumericError(LimbPoseError, RuntimeError):
    """A numeric computation produced non-finite values."""


class TrainingDivergedError(NumericError):
    """Training hit a non-finite loss and was aborted."""
