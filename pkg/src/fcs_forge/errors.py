"""Exception hierarchy.

Every error raised on purpose by the package derives from ``FcsForgeError`` and
carries a short ``category`` string that the command line reports.
"""


class FcsForgeError(Exception):
    category = "error"


class DataError(FcsForgeError):
    category = "data"


class PlanError(FcsForgeError):
    category = "plan"


class FitError(FcsForgeError):
    category = "fit"


class RankDeficientError(FitError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; collinear columns: {self.columns}")


class ConvergenceError(FitError):
    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class SeparationError(FitError):
    def __init__(self, message="perfect prediction detected; fit with augment_perfect_prediction"):
        super().__init__(message)


class PoolingError(FitError):
    category = "pooling"


class BoundsError(FcsForgeError):
    category = "bounds"


class ImputationError(FcsForgeError):
    """A chain failed; ``location`` names where (replicate, block, variable)."""

    category = "imputation"

    def __init__(self, message, location=None, cause=None):
        self.location = dict(location or {})
        self.cause = cause
        super().__init__(message)


class ConversionError(FcsForgeError):
    """Raised when a monetary record cannot be resolved or converted.

    ``status`` is one of the failure statuses of ``ConversionOutcome``.
    """

    category = "conversion"

    def __init__(self, status, message):
        self.status = status
        super().__init__(message)


class TableError(FcsForgeError):
    category = "tables"
