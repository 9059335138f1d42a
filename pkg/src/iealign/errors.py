class ConfigurationError(Exception):
    """Bad configuration detected before any data is processed (exit code 2)."""


class DataError(Exception):
    """Malformed data encountered while processing (exit code 1)."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        parts = [message]
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field {field!r}")
        super().__init__(" | ".join(parts))
        self.line = line
        self.field = field
