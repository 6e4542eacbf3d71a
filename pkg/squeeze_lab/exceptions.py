"""
Error hierarchy for squeeze-lab

Each exception class carries the exit code the command line front end returns for it.
"""
from typing import Any, Dict, Optional


class SqueezeLabError(Exception):
    """Base class for all squeeze-lab failures"""

    exit_code = 4


class ConfigError(SqueezeLabError):
    """Unreadable or invalid run configuration"""

    exit_code = 2


class DomainError(SqueezeLabError, ValueError):
    """An argument lies outside the domain of the operation"""

    exit_code = 2


class PreconditionError(SqueezeLabError, ValueError):
    """An operation was called outside the regime it is defined for"""

    exit_code = 2


class UnphysicalOperatingPointError(SqueezeLabError):
    """
    The steady state has no physical solution.

    Args:
        message: Human readable reason
        diagnostics: Solver state at the point of failure (last residual, branch info, ...)
    """

    exit_code = 3

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{key}={value}" for key, value in sorted(self.diagnostics.items()))
        return f"{base} ({details})"


class ConvergenceError(UnphysicalOperatingPointError):
    """A damped fixed-point iteration did not converge within its iteration budget"""


class NumericalSingularityError(SqueezeLabError):
    """A linear system is singular or two independent numerical checks disagree"""

    exit_code = 4
