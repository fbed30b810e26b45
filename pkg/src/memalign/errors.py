"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: ConfigError -> 2,
everything else raised at runtime -> 3.
"""


class MemalignError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MemalignError):
    """Invalid configuration. The message names the offending key."""


class InvalidFeatureError(MemalignError, ValueError):
    """Feature vector violates an invariant (dimension, finiteness, norm)."""


class NoPositivesError(MemalignError, LookupError):
    """The memory slot for the queried category is empty."""


class SnapshotFormatError(MemalignError, ValueError):
    """Corrupt or truncated snapshot bytes.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class NonFiniteLossError(MemalignError, ArithmeticError):
    """A loss term became NaN/Inf; message carries the per-term dump."""
