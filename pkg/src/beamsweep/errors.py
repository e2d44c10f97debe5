"""Exception types shared across the package."""


class BeamSweepError(Exception):
    """Base class for all package errors."""


class ConfigError(BeamSweepError, ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class TraceFormatError(BeamSweepError, ValueError):
    """A trace file violates the CSV format. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SimulationError(BeamSweepError, RuntimeError):
    """The engine or metrics could not produce a result for the given inputs."""
