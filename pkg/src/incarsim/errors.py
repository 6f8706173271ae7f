"""Exception hierarchy shared across the package."""


class IncarsimError(Exception):
    """Base class for all package errors."""


class ConfigurationError(IncarsimError):
    """Invalid configuration, table, or input file (CLI exit code 2)."""


class FitError(IncarsimError):
    """A distribution fit could not satisfy its targets."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class CalibrationError(IncarsimError):
    """A calibration search failed to bracket or reach its target."""


class EngineError(IncarsimError):
    """One or more replicates failed while running an ensemble."""


class ConsistencyError(IncarsimError):
    """Internal invariant violated; indicates a bug, not bad input."""
