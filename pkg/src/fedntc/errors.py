"""Exception types shared across the package.

Each failure mode gets its own class so callers (and the CLI exit-code
mapping) can distinguish bad configuration, numerical divergence, and
malformed files without string matching.
"""


class FedNTCError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(FedNTCError):
    """Array shape or dtype does not match what an operation requires."""


class TrainingError(FedNTCError):
    """Non-finite loss or gradient encountered during optimization."""


class TableError(FedNTCError):
    """A CDF table cannot be built (degenerate model or bad precision)."""


class DecodeError(FedNTCError):
    """A bitstream is malformed, truncated, or inconsistent with its tables."""


class PartitionError(FedNTCError):
    """A dataset cannot be partitioned with the requested client/shard counts."""


class FormatError(FedNTCError):
    """A dataset file is malformed; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(FedNTCError):
    """A run configuration is invalid; message carries the offending key path."""


class DomainError(FedNTCError):
    """An analytic routine was called outside its mathematical domain."""


class CheckpointError(FedNTCError):
    """A checkpoint file is unreadable, truncated, or has a wrong version."""
