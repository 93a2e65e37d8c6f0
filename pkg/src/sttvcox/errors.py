"""Exception hierarchy shared across the package."""


class SttvError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SttvError, ValueError):
    """Bad input: malformed data, impossible arguments, schema mismatches."""


class SchemaError(ValidationError):
    """An input file lacks a promised column."""


class StratificationError(ValidationError):
    """Cross-validation folds could not be built (some fold has no event)."""


class NumericError(SttvError):
    """A computation produced non-finite or degenerate values."""


class ConvergenceError(SttvError):
    """An iterative solver exhausted its budget.

    Carries the last iterate and the objective path when available so a
    caller can inspect what went wrong.
    """

    def __init__(self, message, last_iterate=None, path=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.path = path


class SeparationError(ConvergenceError):
    """Monotone likelihood: a coefficient diverges without bound."""
