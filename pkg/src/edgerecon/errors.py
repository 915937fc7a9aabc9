"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid configuration or parameters; the message names the offending field."""


class TraceFormatError(ValueError):
    """A trace file cell could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TraceSchemaError(ValueError):
    """Trace file structure (header, dimensions, frame indexing) is inconsistent."""
