"""Orthogonal-subspace NST iteration with hard thresholding and functional
feedback (OSNST+HT+f-FB), plus the simultaneous OMP baseline.

Each iteration of :func:`osnst_solve` performs

1. ``X = W + phi.T (phi phi.T)^-1 (Y - phi W)``  (projection onto ``phi X = Y``)
2. ``Q = orth(X)``; keep the ``f(k)`` rows of largest ``||Q_i.||_2``
3. ``W = argmin ||Y - phi_T Z||_F`` on the kept rows, zero elsewhere

and stops once ``||Y - phi W||_F <= epsilon`` or ``k`` reaches ``max_iter``.
"""

import time
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ContractViolationError,
    DegenerateInputError,
    NumericOverflowError,
    RankDeficiencyError,
)
from .linalg import RowPseudoInverse, orth_basis, pinv_apply, restricted_lsq
from .model import RecoveryResult, SolverConfig, eval_schedule

__all__ = [
    "IterationState",
    "nst_project",
    "row_scores",
    "select_support",
    "feedback_step",
    "osnst_solve",
    "somp_solve",
]


@dataclass(frozen=True)
class IterationState:
    """Snapshot handed to the ``callback`` of :func:`osnst_solve`."""

    k: int
    W_prev: np.ndarray
    X_k: np.ndarray
    Q_k: np.ndarray
    T_k: np.ndarray
    W_k: np.ndarray
    scores: np.ndarray


def nst_project(p, pinv, W_prev):
    """Euclidean projection of `W_prev` onto ``{X : phi X = y}``."""
    W_prev = np.asarray(W_prev, dtype=np.float64)
    if W_prev.shape != (p.N, p.L):
        raise ContractViolationError(f"W_prev has shape {W_prev.shape}, expected ({p.N}, {p.L})")
    return W_prev + pinv_apply(pinv, p.y - p.phi @ W_prev)


def row_scores(Q):
    return np.linalg.norm(Q, axis=1)


def top_rows(scores, count):
    """Indices of the `count` largest scores, lower index first on ties; sorted."""
    scores = np.asarray(scores)
    order = np.lexsort((np.arange(scores.size), -scores))
    return np.sort(order[:count])


def select_support(X_k, count, rank_tol=1e-10, return_basis=False):
    """Rows whose projections onto the column space of `X_k` are largest.

    Parameters
    ----------
    X_k : (N, L) array_like
    count : int
        Number of rows to keep, ``1 <= count <= N``.
    rank_tol : float
        Relative singular-value cutoff for the orthonormal basis.
    return_basis : bool
        Also return the basis ``Q``.

    Returns
    -------
    T : ndarray of int
        Selected row indices in increasing order.
    scores : ndarray
        ``||Q_i.||_2`` for every row.
    Q : ndarray
        Only when `return_basis` is true.
    """
    X_k = np.asarray(X_k, dtype=np.float64)
    if X_k.ndim == 1:
        X_k = X_k[:, None]
    if not 1 <= count <= X_k.shape[0]:
        raise ContractViolationError(f"count={count} outside [1, {X_k.shape[0]}]")
    Q = orth_basis(X_k, rank_tol)
    scores = row_scores(Q)
    T = top_rows(scores, count)
    if return_basis:
        return T, scores, Q
    return T, scores


def feedback_step(p, X_k, T):
    """Re-fit the observations on the rows in `T`; all other rows are zero.

    On a feasible `X_k` this equals keeping ``X_k`` on `T` and adding the
    least-squares image of the discarded part, but it is computed as a fresh
    least-squares solve against ``p.y`` so `X_k` only fixes the shape.
    """
    T = np.asarray(T, dtype=int)
    if T.size > p.M - 1:
        raise ContractViolationError(f"|T|={T.size} exceeds M-1={p.M - 1}")
    W = np.zeros_like(np.asarray(X_k, dtype=np.float64))
    W[T] = restricted_lsq(p.phi, T, p.y)
    return W


def osnst_solve(p, cfg=None, callback=None, pinv=None):
    """Recover a row-sparse signal matrix from ``p.y`` with OSNST+HT+f-FB.

    Parameters
    ----------
    p : ProblemInstance
    cfg : SolverConfig, optional
    callback : callable, optional
        Called with an :class:`IterationState` after every iteration.
    pinv : RowPseudoInverse, optional
        Pre-built factorization of ``p.phi``; built here when omitted.

    Returns
    -------
    RecoveryResult
        ``failure`` is set (and ``converged`` false) when a restricted
        least-squares system turns out rank deficient.

    Raises
    ------
    RankDeficiencyError
        If ``p.phi`` does not have full row rank.
    NumericOverflowError
        If an iterate becomes non-finite.
    """
    cfg = SolverConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    if pinv is None:
        pinv = RowPseudoInverse(p.phi)
    eps = cfg.threshold(p.y)
    cap = p.M - 1
    W = np.zeros((p.N, p.L))
    res = float(np.linalg.norm(p.y))
    residuals = []
    history = []
    T = np.zeros(0, dtype=int)
    failure = None
    clamped = False
    rank_drops = 0
    k = 1
    while res > eps and k < cfg.max_iter:
        X = nst_project(p, pinv, W)
        count = eval_schedule(cfg.schedule, k, cap)
        clamped = clamped or cfg.schedule(k) > cap
        try:
            T, scores, Q = select_support(X, min(count, p.N), cfg.rank_tol, return_basis=True)
        except DegenerateInputError:
            # y == 0 slipped past a zero threshold; the zero matrix is exact
            break
        if Q.shape[1] < p.L:
            rank_drops += 1
        try:
            W_new = feedback_step(p, X, T)
        except RankDeficiencyError as exc:
            failure = f"iteration {k}: {exc}"
            break
        if not np.all(np.isfinite(W_new)):
            raise NumericOverflowError(f"non-finite iterate at k={k}")
        res = float(np.linalg.norm(p.y - p.phi @ W_new))
        residuals.append(res)
        if cfg.verbose:
            history.append(T)
        if callback is not None:
            callback(IterationState(k, W, X, Q, T, W_new, scores))
        W = W_new
        k += 1
    if not cfg.verbose and T.size:
        history = [T]
    return RecoveryResult(
        estimate=W,
        support=T if T.size else np.flatnonzero(np.any(W != 0, axis=1)),
        residual_history=residuals,
        iterations=len(residuals),
        converged=failure is None and res <= eps,
        wall_time=time.perf_counter() - t0,
        support_history=history,
        epsilon=eps,
        solver="osnst",
        failure=failure,
        clamped=clamped,
        rank_drops=rank_drops,
    )


def somp_solve(p, s, verbose=False):
    """Simultaneous orthogonal matching pursuit with a known row sparsity `s`.

    Each round adds the column whose correlations with the current residual
    matrix have the largest l2 norm, then re-fits by least squares on the
    selected columns.
    """
    if not 1 <= s <= p.M - 1:
        raise ContractViolationError(f"s={s} outside [1, M-1={p.M - 1}]")
    t0 = time.perf_counter()
    phi, Y = p.phi, p.y
    selected = []
    available = np.ones(p.N, dtype=bool)
    R = Y.copy()
    Z = np.zeros((0, p.L))
    residuals, history = [], []
    failure = None
    for _ in range(s):
        corr = np.linalg.norm(phi.T @ R, axis=1)
        corr[~available] = -np.inf
        j = int(top_rows(corr, 1)[0])
        selected.append(j)
        available[j] = False
        try:
            Z = restricted_lsq(phi, selected, Y)
        except RankDeficiencyError as exc:
            failure = f"round {len(selected)}: {exc}"
            selected.pop()
            break
        R = Y - phi[:, selected] @ Z
        residuals.append(float(np.linalg.norm(R)))
        if verbose:
            history.append(np.sort(np.array(selected)))
    W = np.zeros((p.N, p.L))
    if selected:
        W[selected] = Z[: len(selected)]
    support = np.sort(np.array(selected, dtype=int))
    return RecoveryResult(
        estimate=W,
        support=support,
        residual_history=residuals,
        iterations=len(residuals),
        converged=failure is None,
        wall_time=time.perf_counter() - t0,
        support_history=history if verbose else [support],
        solver="somp",
        failure=failure,
    )
