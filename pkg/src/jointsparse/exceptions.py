"""Exception types raised across the package."""

import numpy as np


class ContractViolationError(ValueError):
    """Inputs do not satisfy an operation's shape or value contract."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """A matrix that must have full rank is numerically rank deficient.

    Parameters
    ----------
    message : str
    indices : array-like of int, optional
        Column index set of the offending submatrix, when one applies.
    """

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = None if indices is None else np.asarray(indices, dtype=int)


class DegenerateInputError(ValueError):
    """Input is degenerate (e.g. an all-zero matrix where a basis is needed)."""


class SubsetLimitError(RuntimeError):
    """Exhaustive subset enumeration would exceed the configured guard."""


class NumericOverflowError(FloatingPointError):
    """Iterates stopped being finite."""
