"""Exception types shared across the package."""


class DerAggError(Exception):
    """Base class for all package errors."""


class ValidationError(DerAggError, ValueError):
    """Inputs violate a documented contract (domain, shape, or invariant)."""


class UnsupportedOperationError(DerAggError, TypeError):
    """Operation is undefined for the given model kind."""


class AdmissibilityError(DerAggError, ValueError):
    """Closed-form parameters lie outside the region where the formulas hold."""


class SolverError(DerAggError, RuntimeError):
    """An iterative solver failed to converge.

    Carries a ``diagnostics`` dict (last bracket, residual trace, ...) so
    callers can report what was tried.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class MarketInfeasibleError(DerAggError, ValueError):
    """Dispatch cannot meet demand; ``shortfall`` is the missing quantity."""

    def __init__(self, message, shortfall):
        super().__init__(message)
        self.shortfall = shortfall
