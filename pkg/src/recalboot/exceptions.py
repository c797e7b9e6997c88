"""Exception hierarchy shared across the package."""


class RecalbootError(Exception):
    """Base class for all package errors."""


class DomainError(RecalbootError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(RecalbootError, ArithmeticError):
    """A numerical routine failed; ``matrix`` holds the offending input when relevant."""

    def __init__(self, message, matrix=None):
        super().__init__(message)
        self.matrix = matrix


class CalibrationError(RecalbootError):
    """Too few usable out-of-bag records to estimate a recalibration factor."""


class MetricError(RecalbootError, ValueError):
    """A calibration metric is undefined for the supplied points."""


class IngestionError(RecalbootError, ValueError):
    """A CSV table or schema could not be ingested."""


class ConfigError(RecalbootError, ValueError):
    """A configuration file is malformed or contains unknown keys."""
