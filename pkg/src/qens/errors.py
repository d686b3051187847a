"""Exception hierarchy shared across the package.

The CLI maps each family to a distinct exit code.
"""


class QensError(Exception):
    """Base class for all package errors."""


class ConfigError(QensError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(QensError, ValueError):
    """Malformed or unusable input data."""


class QubitCapError(QensError, ValueError):
    """A register would exceed the simulator's qubit cap."""
