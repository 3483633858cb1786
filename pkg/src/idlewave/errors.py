"""Exception hierarchy shared across the package."""


class IdleWaveError(Exception):
    """Base class for all package errors."""


class ConfigError(IdleWaveError, ValueError):
    """Invalid simulation configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SimulationError(IdleWaveError, RuntimeError):
    """Internal-consistency failure inside the event loop (a simulator bug)."""


class ProtocolError(SimulationError):
    """A message carried a tag that does not match the receiver's cycle."""


class TraceError(IdleWaveError):
    """Base class for trace IO problems."""


class TraceParseError(TraceError, ValueError):
    def __init__(self, line, message, source=None):
        self.line = line
        self.source = source
        self.reason = message
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{line}: {message}")


class TraceValidationError(TraceParseError):
    """A record parsed but violates an IdleRecord invariant."""


class SchemaError(TraceError, ValueError):
    """Ingested file lacks a required column."""


class InsufficientDataError(IdleWaveError, ValueError):
    pass


class PhaseUndefinedError(IdleWaveError, ValueError):
    pass


class RenderError(IdleWaveError, ValueError):
    pass
