"""Semantic exception hierarchy shared across the package."""


class LatcorrError(Exception):
    """Base error for this package."""


class DomainError(LatcorrError, ValueError):
    """Inputs violate an operation's contract (domain/shape/type)."""


class NumericalError(LatcorrError, ArithmeticError):
    """A numerical routine failed to converge; carries diagnostics in the message."""


class OutOfHullError(LatcorrError):
    """Interpolation query lies outside the grid hull.

    This is a signal, not a failure: the estimator catches it and falls back
    to direct optimization.
    """


class GridFormatError(LatcorrError, ValueError):
    """A grid file is malformed.  ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DegenerateColumnError(LatcorrError, ValueError):
    """A data column cannot support correlation estimation (e.g. constant binary)."""

    def __init__(self, message: str, column: int | str):
        super().__init__(message)
        self.column = column


class MissingGridError(LatcorrError, FileNotFoundError):
    """A required interpolation grid is not available."""

    def __init__(self, message: str, case: str):
        super().__init__(message)
        self.case = case
