"""Exception types raised by the library.

Every loader and numerical entry point fails with one of these instead of
a bare assert, so callers can tell bad input apart from internal bugs.
"""


class DistilbreakError(Exception):
    """Base class for all library errors."""


class InvalidInputError(DistilbreakError, ValueError):
    """Input violates a value-level contract (non-finite, empty, out of range)."""


class ShapeError(DistilbreakError, ValueError):
    """Array shape does not match what the network or layer expects."""


class CacheError(DistilbreakError, RuntimeError):
    """A forward cache was reused against the wrong network or after a parameter update."""


class ConfigError(DistilbreakError, ValueError):
    """Inconsistent configuration (e.g. distillation temperature mismatch)."""


class TrainingDivergedError(DistilbreakError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) in epoch {epoch}")


class DataFormatError(DistilbreakError, ValueError):
    """A data file does not follow the expected binary format."""


class TruncationError(DataFormatError):
    """A data file is shorter (or longer) than its header declares."""


class LabelRangeError(DataFormatError):
    """A label byte is outside 0..9."""


class CheckpointVersionError(DistilbreakError, ValueError):
    """Checkpoint format version is not supported."""


class CheckpointCorruptError(DistilbreakError, ValueError):
    """Checkpoint payload is damaged or the wrong length."""


class CheckpointMismatchError(DistilbreakError, ValueError):
    """Checkpoint header architecture is inconsistent with its payload."""
