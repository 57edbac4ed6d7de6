"""Exception and warning types raised across the package."""

import numpy as np


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Matrix could not be factorized even after diagonal jitter."""


class DimensionMismatch(ValueError):
    pass


class RankDeficient(np.linalg.LinAlgError):
    pass


class IndexOutOfRange(IndexError):
    pass


class InfeasibleRegion(ValueError):
    """Truncation region has numerically zero Gaussian probability."""


class EmptyModelSet(ValueError):
    pass


class NonBinaryResponse(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class BudgetExceeded(RuntimeWarning):
    """QMC budget exhausted before the relative-error target was met."""


class LowAcceptance(RuntimeWarning):
    pass


class TiltingFallback(RuntimeWarning):
    """Saddle-point solve failed; zero tilting was used instead."""


class ConstantColumn(UserWarning):
    pass
