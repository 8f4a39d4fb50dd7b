"""Exception hierarchy shared by all bgload modules."""

from __future__ import annotations


class BgloadError(Exception):
    """Base class for data and consistency errors raised by the package."""


class ParseError(BgloadError, ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class StructureError(ParseError):
    """A workflow description whose tags appear in an impossible order."""


class EmptyInputError(BgloadError, ValueError):
    pass


class DomainError(BgloadError, ValueError):
    """An argument outside the mathematical domain of an operation."""


class UndefinedFutureError(DomainError):
    pass


class FragmentLookupError(BgloadError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class PlanError(BgloadError):
    pass


class ConfigError(BgloadError, ValueError):
    pass


class SimulationError(BgloadError):
    pass


class WarmupError(SimulationError):
    pass


class CapacityError(SimulationError):
    pass


class CacheBuildError(BgloadError):
    pass


class ConsistencyError(BgloadError):
    pass


class CacheLookupError(BgloadError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""
