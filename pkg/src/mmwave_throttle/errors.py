"""Exception types shared across the package.

The CLI maps each family onto a stable exit code: TraceFormatError -> 2,
ModelError -> 3, ConfigError -> 4.
"""


class MmwaveError(Exception):
    """Base class for all package errors."""


class TraceFormatError(MmwaveError, ValueError):
    """A trace or sidecar file could not be parsed or failed validation."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if field is not None:
            prefix.append(f"field {field!r}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class ModelError(MmwaveError, ValueError):
    """Fitting or evaluating a model failed (degenerate data, key mismatch...)."""


class RankDeficientError(ModelError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class ConfigError(MmwaveError, ValueError):
    """Invalid parameter or configuration document."""
