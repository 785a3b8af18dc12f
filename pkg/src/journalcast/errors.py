"""Exception hierarchy shared across the package."""


class JournalcastError(Exception):
    """Base class for all package errors."""


class ConfigError(JournalcastError, ValueError):
    """Invalid configuration or arguments."""


class DataError(JournalcastError, ValueError):
    """Malformed or inconsistent input data."""


class MissingYearError(DataError, KeyError):
    """A required year is absent from a journal history."""

    def __str__(self):
        return Exception.__str__(self)


class UndefinedCiteScoreError(DataError, ZeroDivisionError):
    """CiteScore denominator is zero."""


class InsufficientHistoryError(DataError):
    """A series or history is too short for the requested operation."""


class ShapeError(JournalcastError, ValueError):
    """Array dimensions do not match what a model or cell expects."""


class UndefinedMetricError(JournalcastError, ArithmeticError):
    """A metric cannot be computed for the given targets."""


class DivergenceError(JournalcastError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite training loss at epoch {epoch}")
