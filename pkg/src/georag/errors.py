"""Shared exception types. CLI exit codes map onto these."""


class GeoragError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(GeoragError):
    """Invalid configuration value or combination (exit code 2)."""


class SchemaError(GeoragError):
    """Malformed input file or record (exit code 2)."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class MissingArtifactError(GeoragError):
    """A required artifact (index, corpus file) does not exist (exit code 3)."""


class TransportError(GeoragError):
    """Remote backend failure after retries were exhausted (exit code 5)."""

    def __init__(self, message: str, kind: str = "transport", attempts: int = 1,
                 status: int | None = None):
        super().__init__(message)
        self.kind = kind          # "timeout" | "status" | "connection" | "malformed"
        self.attempts = attempts
        self.status = status


class ProtocolError(GeoragError):
    """Backend response violates the wire contract (wrong arity, out-of-range values)."""
