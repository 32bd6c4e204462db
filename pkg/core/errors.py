"""
errors.py — Exception hierarchy shared by the simulator, Gramian builders,
placement search and the CLI runner.

Every class maps onto one CLI exit code (see EXIT_CODES).
"""
from typing import Optional


class ObservabilityError(Exception):
    """Base class for all StochGram failures."""
    exit_code: int = 1


class ConfigurationError(ObservabilityError, ValueError):
    """Inconsistent dimensions, parameters or experiment specs."""
    exit_code = 2


class IntegrationDivergedError(ObservabilityError):
    """A non-finite state appeared during time stepping."""
    exit_code = 3

    def __init__(self, step: int, label: Optional[str] = None):
        self.step = step
        self.label = label
        where = f" ({label})" if label else ""
        super().__init__(f"integration diverged at step {step}{where}")

    def relabel(self, label: str) -> "IntegrationDivergedError":
        return IntegrationDivergedError(self.step, label)


class EncoderNotReady(ObservabilityError):
    """Fewer strain samples than one full encoder window."""

    def __init__(self, have: int, need: int):
        self.have = have
        self.need = need
        super().__init__(f"encoder not ready: {have} samples of history, {need} required")


class OutOfBoundsError(ObservabilityError, ValueError):
    """A sensor locus lies outside the wing or the search box."""
    exit_code = 2


class InfeasiblePlacementError(ObservabilityError):
    """No evaluated placement kept every sensor pair at least d_allowed apart."""


class BudgetExceededError(ObservabilityError):
    """An exhaustive search would evaluate more subsets than allowed."""
    exit_code = 4


EXIT_CODES = {
    "ok": 0,
    "error": 1,
    "validation": ConfigurationError.exit_code,
    "diverged": IntegrationDivergedError.exit_code,
    "budget": BudgetExceededError.exit_code,
}
