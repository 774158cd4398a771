"""Exception hierarchy shared by every module of the simulator."""

from __future__ import annotations


class MinuetError(Exception):
    """Base class for all simulator errors."""


class ConfigError(MinuetError):
    """Invalid scenario configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class TraceError(MinuetError):
    """Malformed mobility trace. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class TraceSchemaError(TraceError):
    """A trace record is missing a required attribute or column."""

    def __init__(self, attribute: str, line: int | None = None):
        self.attribute = attribute
        super().__init__(f"missing required attribute '{attribute}'", line)


class DataError(MinuetError):
    """Bad data encountered while simulating (e.g. a NaN position)."""


class ContractError(MinuetError):
    """A caller violated an operation's precondition."""


class ClockOrderError(ContractError):
    """A message was received before it was detected (tr < td)."""


class LogSchemaError(MinuetError):
    """An event log line does not match the record schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
