"""
Exception handling for the toolkit.

This module defines the exception hierarchy raised by the analysis
modules and the handler that maps them to process exit codes.
"""

import math
from typing import Any, Dict, Iterable, Optional

from loguru import logger

EXIT_OK = 0
EXIT_ANALYSIS = 1
EXIT_USAGE = 2


class BgampError(Exception):
    """Base exception for the back-gate amplifier toolkit."""

    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_ANALYSIS,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class DomainError(BgampError):
    """Raised when an input lies outside an operation's domain."""

    def __init__(self, message: str = "Input outside domain", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_ANALYSIS, details)


class IdealLimitError(BgampError):
    """Raised when a quantity diverges in an ideal limit (infinite gain, r_o or IP3)."""

    limit = math.inf

    def __init__(self, quantity: str, details: Optional[Dict[str, Any]] = None):
        self.quantity = quantity
        super().__init__(f"{quantity} is infinite in this limit", EXIT_ANALYSIS, details)


class TopologyError(BgampError):
    """Raised when a circuit or topology is structurally invalid."""

    def __init__(self, message: str = "Invalid topology", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_ANALYSIS, details)


class ConvergenceError(BgampError):
    """Raised when Newton iteration and source stepping both fail."""

    def __init__(
        self,
        message: str = "DC solution did not converge",
        node: Optional[str] = None,
        residual: Optional[float] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.node = node
        self.residual = residual
        merged = {"node": node, "residual": residual}
        merged.update(details or {})
        super().__init__(message, EXIT_ANALYSIS, merged)


class SingularCircuitError(BgampError):
    """Raised when the small-signal system is singular."""

    def __init__(self, node: str, details: Optional[Dict[str, Any]] = None):
        self.node = node
        super().__init__(f"Singular nodal system: node '{node}' is floating", EXIT_ANALYSIS, details)


class FitError(BgampError):
    """Raised when a polynomial fit cannot be trusted."""

    def __init__(self, message: str = "Polynomial fit failed", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_ANALYSIS, details)


class BiasMatchError(BgampError):
    """Raised when bias matching needs an offset outside the allowed window."""

    def __init__(self, message: str = "Bias match outside window", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_ANALYSIS, details)


class NetlistError(BgampError):
    """Base class for netlist diagnostics; always carries a 1-based position."""

    def __init__(
        self,
        message: str,
        line: int,
        column: int,
        expected: Iterable[str] = (),
    ):
        self.line = line
        self.column = column
        self.expected = frozenset(expected)
        details = {"line": line, "column": column, "expected": sorted(self.expected)}
        super().__init__(f"line {line}, column {column}: {message}", EXIT_USAGE, details)


class NetlistSyntaxError(NetlistError):
    """Raised when a netlist line does not match the card grammar."""


class UndefinedModelError(NetlistError):
    """Raised when a device references a model with no .model card."""


def handle_exception(exc: BaseException) -> int:
    """
    Log an exception and map it to a process exit code.

    Args:
        exc: Exception raised by a command

    Returns:
        Exit code: 2 for netlist errors, 1 for analysis errors
    """
    if isinstance(exc, BgampError):
        logger.bind(details=exc.details).error(f"{type(exc).__name__}: {exc.message}")
        return exc.exit_code

    logger.opt(exception=exc).error(f"Unhandled exception: {exc}")
    return EXIT_ANALYSIS
