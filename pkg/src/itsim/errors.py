"""Exception hierarchy.

Input problems (bad files, bad columns, bad configuration) derive from
:class:`InputError`; numerical failures during fitting or simulation derive
from :class:`NumericalError`. The CLI maps the former to exit code 2 and the
latter to exit code 1.
"""


class ItsError(Exception):
    """Base class for all package errors."""


class InputError(ItsError, ValueError):
    """Invalid input data or configuration."""


class DataLoadError(InputError):
    """A data file could not be turned into a valid series."""


class MissingColumnError(DataLoadError):
    def __init__(self, column, where="data"):
        self.column = column
        super().__init__(f"missing column {column!r} in {where}")


class NonConsecutiveTimesError(DataLoadError):
    def __init__(self, detail=""):
        msg = "non-consecutive times"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class NonNumericCellError(DataLoadError):
    def __init__(self, column, row, value):
        self.column = column
        self.row = row
        super().__init__(f"non-numeric cell {value!r} in column {column!r} (row {row})")


class T0OutOfRangeError(DataLoadError):
    def __init__(self, t0, first, last):
        super().__init__(
            f"t0={t0} outside observed range [{first}, {last}] "
            "(need at least 3 pre-policy and 1 post-policy time)"
        )


class NumericalError(ItsError, ArithmeticError):
    """Fitting or simulation could not proceed numerically."""


class DegenerateDesignError(NumericalError):
    """Design matrix has no usable columns or too few rows."""


class NonstationaryError(NumericalError):
    """Autoregressive coefficient makes a conversion undefined."""


class WindowTooSmallError(NumericalError):
    """Smoother window holds too few points for the requested degree."""
