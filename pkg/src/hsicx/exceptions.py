"""Exception hierarchy shared by all hsicx modules."""

import numpy as np


class HsicxError(Exception):
    """Base class for errors raised by hsicx."""


class InvalidInputError(HsicxError, ValueError):
    """Input data has the wrong shape, size or content."""


class InvalidParameterError(HsicxError, ValueError):
    """A configuration or kernel parameter is out of range."""


class UnsupportedOperationError(HsicxError, TypeError):
    """The operation is not defined for the given kernel or function class."""


class NumericalError(HsicxError, FloatingPointError):
    """A non-finite value appeared during optimization."""


class SingularSystemError(HsicxError, np.linalg.LinAlgError):
    """A linear system is singular or too ill-conditioned to solve.

    Attributes
    ----------
    condition_number : float
        Condition number of the offending matrix (``inf`` if exactly singular).
    """

    def __init__(self, message, condition_number=float("inf")):
        super().__init__(f"{message} (condition number {condition_number:.3g})")
        self.condition_number = condition_number


class OrderConditionError(SingularSystemError):
    """Fewer instrument features than regressor features."""

    def __init__(self, n_instruments, n_features):
        HsicxError.__init__(
            self,
            f"order condition violated: {n_instruments} instrument features "
            f"< {n_features} regressor features",
        )
        self.condition_number = float("inf")
        self.n_instruments = n_instruments
        self.n_features = n_features


class DominationError(HsicxError, ValueError):
    """An intervention would extend the support of the instrument."""
