"""Exception hierarchy shared by the analytic model, the simulator and the CLI."""


class D2DOffloadError(Exception):
    """Base class for all package errors."""


class DomainError(D2DOffloadError, ValueError):
    """An argument lies outside the domain of a function."""


class GeometryError(DomainError):
    """Lens-area evaluation requested outside the partial-overlap regime."""


class ConvergenceError(D2DOffloadError, ArithmeticError):
    """A series or iteration failed to reach its tolerance."""


class QuadratureError(D2DOffloadError, ArithmeticError):
    """Adaptive quadrature did not meet the requested tolerance.

    The best estimate and the achieved error bound travel with the exception
    so callers can decide whether the result is still usable.
    """

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


class UndefinedConditionalError(D2DOffloadError, ZeroDivisionError):
    """Conditioning on an event of probability zero (e.g. D2D mode when h_d(c)=0)."""


class InsufficientSamplesError(D2DOffloadError, ValueError):
    """Too few Monte Carlo samples for a confidence interval."""


class ConfigError(D2DOffloadError, ValueError):
    """Invalid or unknown configuration entry."""
