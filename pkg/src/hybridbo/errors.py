"""Exception types shared across the package."""


class HybridBoError(Exception):
    """Base class for package errors."""


class ContractViolation(HybridBoError):
    """An operation was called with inputs violating its contract."""


class FactorizationError(HybridBoError):
    """Kernel matrix could not be factorized even after jitter escalation."""


class FitError(HybridBoError):
    """Hyperparameter fitting failed for all starts."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class EvaluationError(HybridBoError):
    """Model evaluation produced a non-finite result."""


class MultistartError(HybridBoError):
    """No multistart run converged."""

    def __init__(self, message, statuses=None):
        super().__init__(message)
        self.statuses = statuses or []


class RootFindError(HybridBoError):
    """Root finder failed from every start."""


class SimulationError(HybridBoError):
    """Benchmark oracle simulation failed (distinct from infeasibility)."""


class ThermoDomainError(HybridBoError):
    """Thermodynamic correlation queried outside its validity range."""
