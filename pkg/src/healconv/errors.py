"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors exit 2,
numeric failures exit 3.
"""


class HealconvError(Exception):
    """Base class for all package errors."""


class DomainError(HealconvError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class ContractError(HealconvError, ValueError):
    """Inputs violate a shape/level/channel contract between components."""


class ConfigError(HealconvError, ValueError):
    """A configuration value is invalid (bad mode, bad resolution, ...)."""


class ParseError(HealconvError, ValueError):
    """A file could not be parsed; carries position information when known."""

    def __init__(self, message, *, line=None, offset=None):
        loc = ""
        if line is not None:
            loc = f" (line {line})"
        elif offset is not None:
            loc = f" (byte offset {offset})"
        super().__init__(message + loc)
        self.line = line
        self.offset = offset


class NumericError(HealconvError, ArithmeticError):
    """A numeric failure (non-finite loss or gradient) aborted a computation."""
