"""Exception hierarchy shared by every module."""


class RRMixError(Exception):
    """Base class for all package errors."""


class ConfigError(RRMixError, ValueError):
    """Invalid configuration value or hyperparameter."""


class DomainError(RRMixError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class IngestionError(RRMixError, ValueError):
    """Malformed dataset file.

    ``row`` is the 1-based data row (header excluded), ``column`` the offending
    column name; either may be None when the problem is file-level.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class InsufficientDataError(RRMixError, ValueError):
    """Too few observations or draws for the requested computation."""


class NumericError(RRMixError, ArithmeticError):
    """Numerical failure inside a sampler step.

    ``step`` names the Gibbs block and ``draw`` the sweep index when known.
    """

    def __init__(self, message, step=None, draw=None):
        self.step = step
        self.draw = draw
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        tags = []
        if self.step is not None:
            tags.append(f"step={self.step}")
        if self.draw is not None:
            tags.append(f"draw={self.draw}")
        return f"{msg} [{', '.join(tags)}]" if tags else msg


class NotApplicableError(ConfigError):
    """Report or operation that does not apply to this kind of chain."""
