"""Exception hierarchy and warning categories used across the package."""


class DeconfoundError(Exception):
    """Base class for every error raised by this package."""


class DataError(DeconfoundError):
    """Invalid input data, file, or configuration (CLI exit code 2)."""


class DimensionMismatchError(DataError):
    """Array dimensions inconsistent with each other or with a contract."""


class NonFiniteError(DataError):
    """NaN or infinity found where finite values are required."""


class NumericalError(DeconfoundError):
    """Failure inside an estimation procedure (CLI exit code 3)."""


class RankDeficientError(NumericalError):
    """Design matrix is numerically rank deficient."""


class DegenerateBasisWarning(RuntimeWarning):
    """Concatenated eigenvector blocks are close to rank deficient.

    Emitted instead of an error because real data may violate the
    full-rank assumption on the stacked hidden-effect matrix.
    """
