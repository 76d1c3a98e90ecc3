"""Exceptions raised by the cascade coordinator library."""


class CascadeError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(CascadeError, ValueError):
    """A parameter, bound or configuration file is invalid."""


class UnreachableObservationError(CascadeError):
    """A belief update was requested for an action of probability zero."""


class PrescriptionDomainError(CascadeError, KeyError):
    """A table prescription was queried at an (n, m) pair it does not define."""


class ConvergenceError(CascadeError):
    """Value iteration hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class CrosscheckError(CascadeError):
    """Simulated and analytic figures disagree by more than three standard errors."""
