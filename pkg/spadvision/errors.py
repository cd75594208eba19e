"""
Exception hierarchy for SpadVision.

Every error raised on purpose by the package derives from SpadVisionError,
so callers (and the command-line front end) can tell library failures from
programming errors.
"""


class SpadVisionError(Exception):
    """Base class for all SpadVision errors."""
    pass


class ConfigError(SpadVisionError, ValueError):
    """Invalid parameter record or configuration file."""
    pass


class OutOfWindowError(SpadVisionError, ValueError):
    """Surface depth lies outside the sensor's unambiguous timing window."""
    pass


class UndefinedSbrError(SpadVisionError, ValueError):
    """SBR requested for a frame that holds no photons at all."""
    pass


class ShapeMismatchError(SpadVisionError, ValueError):
    """Array dimensions disagree with what an operation requires."""
    pass


class MissingSourceError(SpadVisionError, ValueError):
    """A network input kind was requested without the frame it is built from."""
    pass


class DatasetError(SpadVisionError):
    """Dataset or checkpoint container could not be read or written."""
    pass


class VersionMismatchError(DatasetError):
    """Container written by an incompatible format version."""
    pass


class TruncatedBlobError(DatasetError):
    """Binary blob is shorter than the offsets declared in the manifest."""
    pass


class ChecksumError(DatasetError):
    """CRC32 of a stored record does not match its contents."""

    def __init__(self, record, expected, actual):
        self.record = record
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"Checksum mismatch in record {record!r}: "
            f"expected {expected:08x}, got {actual:08x}"
        )


class TrainingError(SpadVisionError):
    """Training cannot start or diverged."""
    pass


class EvaluationError(SpadVisionError):
    """Evaluation inputs are empty, inconsistent or statistically unusable."""
    pass


class BenchmarkError(SpadVisionError):
    """Benchmark preconditions not met."""
    pass


__all__ = [
    "SpadVisionError",
    "ConfigError",
    "OutOfWindowError",
    "UndefinedSbrError",
    "ShapeMismatchError",
    "MissingSourceError",
    "DatasetError",
    "VersionMismatchError",
    "TruncatedBlobError",
    "ChecksumError",
    "TrainingError",
    "EvaluationError",
    "BenchmarkError",
]
