"""Exception types shared across the package."""


class PolySparseError(Exception):
    """Base class for package errors."""


class CapacityError(PolySparseError, ValueError):
    """The requested monomial basis is too large to index."""


class NumericalError(PolySparseError, ArithmeticError):
    """A linear system could not be factorized reliably.

    ``diagnostics`` carries whatever conditioning information was
    available when the failure happened.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DataError(PolySparseError, ValueError):
    """Malformed input data (CSV parse failures, bad dimensions)."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column
