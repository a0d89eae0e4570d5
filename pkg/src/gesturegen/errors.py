"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class GestureGenError(Exception):
    """Base class for all package errors."""


class ConfigError(GestureGenError):
    """Invalid configuration value, unknown key, or inconsistent setup."""


class DataError(GestureGenError):
    """Bad input data: missing files, misaligned durations, bad manifests."""


class ParseError(DataError):
    """Malformed motion/transcript file. Carries a line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(GestureGenError):
    """Non-finite values or numerical breakdown (divergence, rank collapse)."""


class DimensionError(GestureGenError):
    """Shape mismatch between tensors or feature sequences."""
