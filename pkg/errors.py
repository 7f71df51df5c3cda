"""
Error types shared by the library and the CLI.

Each class carries the exit code `run.py` reports for it:
1 input error, 2 inadmissible or inapplicable, 3 numeric failure.
"""

from typing import Any, Dict, Optional


class ToolkitError(Exception):
    exit_code = 3

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = details or {}


class InputError(ToolkitError, ValueError):
    """Malformed input: bad expressions, samples, parameter strings."""
    exit_code = 1


class DomainError(InputError):
    """Argument outside the mathematical domain of an operation."""


class ConfigurationError(InputError):
    """Model configuration the operation cannot work with."""


class InadmissibleError(ToolkitError, ValueError):
    """A condition the asymptotic result depends on does not hold."""
    exit_code = 2

    def __init__(self, message: str, report: Any = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.report = report


class NotApplicableError(InadmissibleError):
    """The operation's hypothesis is not met (finite endpoint, Slepian ordering, ...)."""


class NumericalError(ToolkitError, ArithmeticError):
    exit_code = 3


class DivergenceError(NumericalError):
    """An integral that must be finite diverges toward an endpoint."""
    exit_code = 2

    def __init__(self, message: str, side: Optional[int] = None, evidence: Any = None):
        super().__init__(message, {"side": side})
        self.side = side
        self.evidence = evidence


class NonMonotoneError(NumericalError):
    """The approximation is not monotone on the requested bracket."""


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ToolkitError):
        return error.exit_code
    if isinstance(error, (ValueError, TypeError, FileNotFoundError)):
        return 1
    return 3
