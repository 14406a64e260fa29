"""Exception types shared across the package."""

__all__ = [
    "SpdeAvgError",
    "ConfigurationError",
    "BlowupError",
    "EstimationQualityError",
    "UsageError",
]


class SpdeAvgError(Exception):
    """Base class for package-specific failures."""


class ConfigurationError(SpdeAvgError):
    """Invalid configuration: bad keys, mismatched sizes, impossible setups."""


class BlowupError(SpdeAvgError):
    """An integrator produced a non-finite mode coefficient."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class EstimationQualityError(SpdeAvgError):
    """A Monte Carlo estimate failed its accuracy requirement."""


class UsageError(SpdeAvgError):
    """An operation was called on data missing required ingredients."""
