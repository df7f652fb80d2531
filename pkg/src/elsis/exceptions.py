"""Exception hierarchy shared across the package."""


class ElsisError(Exception):
    """Base class for all package errors."""


class DegenerateInput(ElsisError, ValueError):
    """The empirical likelihood statistic is undefined for this input
    (too few rows, constant estimating function, or a numerically
    singular second-moment matrix)."""


class DomainViolation(ElsisError, ValueError):
    """A Lagrange multiplier leaves the domain ``1 + lambda' g_i > 0``."""


class ConstantColumn(ElsisError, ValueError):
    def __init__(self, column, name=None):
        self.column = column
        self.name = name
        label = f"{column}" if name is None else f"{column} ({name})"
        super().__init__(f"feature {label} has zero sample variance; drop it before screening")


class DimensionMismatch(ElsisError, ValueError):
    pass


class InvalidCovariance(ElsisError, ValueError):
    pass


class DataError(ElsisError, ValueError):
    """Malformed input file. Maps to CLI exit code 2."""


class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: non-numeric or non-finite cell {value!r}")


class RaggedRow(DataError):
    def __init__(self, row, expected, found):
        self.row = row
        super().__init__(f"row {row}: expected {expected} fields, found {found}")
