"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 2, NumericalError -> 3.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, schemas, cohorts)."""


class SchemaError(DataError):
    """Attribute schema violation: bad declaration or out-of-range value."""


class TrialError(DataError):
    """Trial generation or scoring cannot proceed on this cohort."""


class NumericalError(ArithmeticError):
    """Numerical failure, e.g. a rank-deficient design matrix."""


class RankDeficiencyError(NumericalError):
    """Design matrix is numerically rank deficient."""

    def __init__(self, columns, message=None):
        self.columns = tuple(columns)
        super().__init__(
            message
            or "design matrix is rank deficient; dependent column(s): "
            + ", ".join(self.columns)
        )
