"""Exception hierarchy shared by the simulation modules and the CLI."""

from __future__ import annotations

from typing import Any


class NashSeekError(Exception):
    """Base class for all package errors."""


class InputError(NashSeekError, ValueError):
    """Malformed arguments: wrong shapes, empty regions, negative times."""


class AssumptionViolation(NashSeekError):
    """A standing assumption (connectivity, strong monotonicity) does not hold."""


class OracleFailure(NashSeekError):
    """The Nash oracle hit its iteration cap.

    ``best`` holds the iterate with the smallest pseudo-gradient norm seen.
    """

    def __init__(self, message: str, best: Any, residual: float) -> None:
        super().__init__(message)
        self.best = best
        self.residual = residual


class DivergenceError(NashSeekError):
    """A non-finite state was produced during integration.

    ``trace`` is the partial trace up to the last finite sample and
    ``last_state`` the last finite state reached by a completed step.
    """

    def __init__(self, message: str, trace: Any = None, last_state: Any = None, t: float = float("nan")) -> None:
        super().__init__(message)
        self.trace = trace
        self.last_state = last_state
        self.t = t


class StiffnessError(NashSeekError):
    """Adaptive step size fell below the configured floor."""

    def __init__(self, message: str, trace: Any = None, t: float = float("nan")) -> None:
        super().__init__(message)
        self.trace = trace
        self.t = t


class ConfigError(NashSeekError):
    """Run-config schema or semantic violation, anchored to a source line when known."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
