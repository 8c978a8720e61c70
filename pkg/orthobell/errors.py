"""Exceptions raised by the lab.

Everything derives from ValueError so callers that only know the builtin
still catch lab failures. The CLI maps the subclasses to exit codes.
"""

from typing import Any, Dict


class LabError(ValueError):
    """Base class for all lab errors."""


class DomainError(LabError):
    """Input lies outside the domain of an operation."""


class NumericError(LabError):
    """A numerical procedure failed to converge or to bracket a root."""

    def __init__(self, message: str, **diagnostics: Any):
        super().__init__(message)
        self.diagnostics: Dict[str, Any] = diagnostics

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ', '.join(f'{k}={v!r}' for k, v in self.diagnostics.items())
        return f'{base} ({details})'


class PreconditionError(LabError):
    """A stated precondition (orthonormality, equal norms, ...) does not hold."""

    def __init__(self, constraint: str, residual: float):
        super().__init__(f'precondition violated: {constraint} (residual {residual:.3e})')
        self.constraint = constraint
        self.residual = residual


class BranchError(LabError):
    """Wrong or degenerate Pogorelov branch."""


class ConstructionError(LabError):
    """A martingale construction broke a required hypothesis at some step."""

    def __init__(self, hypothesis: str, step: int, residual: float):
        super().__init__(f'hypothesis "{hypothesis}" violated at step {step} (residual {residual:.3e})')
        self.hypothesis = hypothesis
        self.step = step
        self.residual = residual


class UsageError(LabError):
    """Bad parameters at the command-line level."""
