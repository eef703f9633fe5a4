"""Exception hierarchy shared across the package.

Every failure the CLI can hit maps to one of these, so the front end can
emit a single machine-parsable error line with the class name as category.
"""


class MlasdiError(Exception):
    """Base class for all package errors."""


class ShapeError(MlasdiError):
    """Array dimensions do not match an operation's contract."""


class DivergenceError(MlasdiError):
    """Training or integration produced non-finite values."""


class ConditioningError(MlasdiError):
    """A kernel matrix could not be factorized even after jitter escalation."""


class OrderingError(MlasdiError):
    """Stages were trained or requested out of sequence."""


class ValidationError(MlasdiError):
    """A data container violates one of its invariants."""


class UndefinedMetricError(MlasdiError):
    """An error metric is undefined for the given input (e.g. zero-norm truth)."""


class ConfigError(MlasdiError):
    """A run configuration is malformed or inconsistent."""


class SnapshotFormatError(MlasdiError):
    """Base class for snapshot/checkpoint file format violations."""


class BadMagicError(SnapshotFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(SnapshotFormatError):
    """File declares a format version this build cannot read."""


class TruncatedPayloadError(SnapshotFormatError):
    """File is shorter than its header declares."""


class DimensionOverflowError(SnapshotFormatError):
    """Header dimensions are implausibly large or overflow the payload size."""
