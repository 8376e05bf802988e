"""scikit-learn compatible wrappers around the joint-sparse solvers.

The sensing matrix plays the role of the design matrix: ``fit(phi, Y)`` with
``phi`` of shape (M, N) and ``Y`` of shape (M, L). As in
:class:`sklearn.linear_model.OrthogonalMatchingPursuit`, ``coef_`` has shape
(L, N) (or (N,) for a single snapshot) and ``predict(phi) = phi @ coef_.T``.
"""

import numpy as np
from sklearn.base import BaseEstimator, MultiOutputMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .model import FeedbackSchedule, ProblemInstance, SolverConfig
from .solver import osnst_solve, somp_solve

__all__ = ["OSNSTRegressor", "SOMPRegressor", "check_sensing_pair"]


def check_sensing_pair(estimator, phi, Y, reset=True):
    """Validate ``(phi, Y)`` and return float64 arrays with ``Y`` 2-D.

    Also returns whether ``Y`` was given as a 1-D vector.
    """
    phi, Y = validate_data(estimator, phi, Y, reset=reset, multi_output=True,
                           y_numeric=True, dtype=np.float64, ensure_min_samples=2)
    vector = Y.ndim == 1
    return phi, (Y[:, None] if vector else Y), vector


class _JointSparseBase(MultiOutputMixin, RegressorMixin, BaseEstimator):
    def _store(self, result, vector):
        W = result.estimate
        self.result_ = result
        self.row_coef_ = W
        self.coef_ = W[:, 0] if vector else W.T
        self.support_ = np.asarray(result.support, dtype=int)
        self.n_iter_ = result.iterations
        self.residual_history_ = np.asarray(result.residual_history)
        self.intercept_ = 0.0 if vector else np.zeros(W.shape[1])

    def predict(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_.T

    def transform(self, X):
        """Keep only the columns of `X` on the recovered support."""
        check_is_fitted(self)
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X[:, self.support_]


class OSNSTRegressor(_JointSparseBase):
    """Joint row-sparse regression by OSNST+HT+f-FB.

    Parameters
    ----------
    schedule : str or FeedbackSchedule, default="linear:6"
        Feedback function ``f``; see :meth:`FeedbackSchedule.parse`.
    epsilon : float or None, default=None
        Absolute residual threshold. ``None`` means ``rel_epsilon * ||Y||_F``.
    rel_epsilon : float, default=1e-12
    max_iter : int, default=300
    rank_tol : float, default=1e-10
    verbose : bool, default=False
        Keep the selected support of every iteration in ``result_``.

    Attributes
    ----------
    coef_ : ndarray of shape (L, N) or (N,)
    row_coef_ : ndarray of shape (N, L)
        The recovered signal matrix in (rows = features) layout.
    support_ : ndarray of int
    n_iter_ : int
    converged_ : bool
    result_ : RecoveryResult
    """

    def __init__(self, schedule="linear:6", epsilon=None, rel_epsilon=1e-12,
                 max_iter=300, rank_tol=1e-10, verbose=False):
        self.schedule = schedule
        self.epsilon = epsilon
        self.rel_epsilon = rel_epsilon
        self.max_iter = max_iter
        self.rank_tol = rank_tol
        self.verbose = verbose

    def fit(self, X, y):
        phi, Y, vector = check_sensing_pair(self, X, y)
        cfg = SolverConfig(
            epsilon=self.epsilon,
            max_iter=self.max_iter,
            schedule=FeedbackSchedule.parse(self.schedule),
            rank_tol=self.rank_tol,
            rel_epsilon=self.rel_epsilon,
            verbose=self.verbose,
        )
        result = osnst_solve(ProblemInstance(phi, Y), cfg)
        self._store(result, vector)
        self.converged_ = result.converged
        return self


class SOMPRegressor(_JointSparseBase):
    """Simultaneous orthogonal matching pursuit with a fixed row budget.

    Parameters
    ----------
    n_nonzero_rows : int
        Number of rows (atoms) to select.
    """

    def __init__(self, n_nonzero_rows=1):
        self.n_nonzero_rows = n_nonzero_rows

    def fit(self, X, y):
        phi, Y, vector = check_sensing_pair(self, X, y)
        result = somp_solve(ProblemInstance(phi, Y), int(self.n_nonzero_rows))
        self._store(result, vector)
        return self
