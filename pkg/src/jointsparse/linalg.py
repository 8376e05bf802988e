"""Dense real-matrix kernels used by the solver and the diagnostics.

Everything works on float64 ndarrays. Transposes are plain transposes since
only the real field is supported.
"""

import numpy as np
from scipy import linalg as sla

from .exceptions import ContractViolationError, DegenerateInputError, RankDeficiencyError

__all__ = [
    "RowPseudoInverse",
    "as_matrix",
    "pinv_apply",
    "orth_basis",
    "restricted_lsq",
    "spectral_norm",
]


def as_matrix(A, name="A"):
    """Return `A` as a finite, 2-D float64 array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ContractViolationError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ContractViolationError(f"{name} contains non-finite entries")
    return A


class RowPseudoInverse:
    """Cached operator ``R -> phi.T @ inv(phi @ phi.T) @ R``.

    ``phi @ phi.T`` is Cholesky-factored once at construction; every
    application afterwards costs two triangular solves and one product.

    Parameters
    ----------
    phi : (M, N) array_like
        Sensing matrix with full row rank.

    Raises
    ------
    RankDeficiencyError
        If ``phi @ phi.T`` is not numerically positive definite.
    """

    def __init__(self, phi):
        phi = as_matrix(phi, "phi")
        m, n = phi.shape
        if m > n:
            raise RankDeficiencyError(f"phi is {m}x{n}; full row rank needs M <= N")
        gram = phi @ phi.T
        try:
            self.factor = sla.cho_factor(gram, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise RankDeficiencyError("phi @ phi.T is not positive definite; phi lacks full row rank") from exc
        # cho_factor only fails on exact breakdown; catch near-singular Gram too.
        diag = np.diag(self.factor[0])
        if diag.min() <= np.sqrt(m * np.finfo(float).eps) * diag.max():
            raise RankDeficiencyError("phi is numerically rank deficient")
        self.phi = np.array(phi)
        self.phi.setflags(write=False)

    @property
    def shape(self):
        return self.phi.shape

    def solve_gram(self, R):
        """Solve ``(phi @ phi.T) Z = R``."""
        return sla.cho_solve(self.factor, R, check_finite=False)

    def apply(self, R):
        return pinv_apply(self, R)


def pinv_apply(p, R):
    """Apply the minimum-norm right inverse ``phi.T (phi phi.T)^-1`` to `R`.

    With ``R = Y - phi @ W`` the sum ``W + pinv_apply(p, R)`` is feasible,
    i.e. ``phi @ (W + Z) == Y`` to working precision.

    Parameters
    ----------
    p : RowPseudoInverse
    R : (M, L) array_like

    Returns
    -------
    Z : (N, L) ndarray
    """
    R = np.asarray(R, dtype=np.float64)
    vector = R.ndim == 1
    if vector:
        R = R[:, None]
    if R.ndim != 2 or R.shape[0] != p.phi.shape[0]:
        raise ContractViolationError(
            f"residual has shape {R.shape}, expected ({p.phi.shape[0]}, L)")
    Z = p.phi.T @ p.solve_gram(R)
    return Z[:, 0] if vector else Z


def orth_basis(X, rank_tol=1e-10):
    """Orthonormal basis of the column space of `X` from its SVD.

    Singular values at or below ``rank_tol * sigma_max`` are treated as zero,
    so the number of returned columns is the numerical rank.

    Parameters
    ----------
    X : (N, L) array_like
    rank_tol : float, default=1e-10

    Returns
    -------
    Q : (N, r) ndarray
        Left singular vectors belonging to the retained singular values.

    Raises
    ------
    DegenerateInputError
        If `X` is identically zero.
    """
    X = as_matrix(X, "X")
    U, sv, _ = np.linalg.svd(X, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        raise DegenerateInputError("cannot build a basis for an all-zero matrix")
    r = int(np.count_nonzero(sv > rank_tol * sv[0]))
    return U[:, :r]


def restricted_lsq(phi, T, B, rtol=None):
    """Least-squares fit of `B` using only the columns of `phi` listed in `T`.

    Solves ``argmin_Z ||phi[:, T] @ Z - B||_F`` through a column-pivoted QR
    factorization; the Gram matrix ``phi_T.T @ phi_T`` is never formed.

    Parameters
    ----------
    phi : (M, N) array_like
    T : sequence of int
        Column indices; ``len(T) <= M``.
    B : (M, L) array_like
    rtol : float, optional
        Relative threshold on ``|R_kk| / |R_00|`` below which the restricted
        matrix is declared rank deficient. Defaults to ``max(M, |T|) * eps``.

    Returns
    -------
    Z : (|T|, L) ndarray

    Raises
    ------
    RankDeficiencyError
        If ``phi[:, T]`` does not have full column rank. The offending index
        set is attached as ``exc.indices``.
    """
    phi = np.asarray(phi, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    T = np.asarray(T, dtype=int).ravel()
    m = phi.shape[0]
    if B.shape[0] != m:
        raise ContractViolationError(f"B has {B.shape[0]} rows, phi has {m}")
    if T.size == 0:
        Z = np.zeros((0, B.shape[1]))
        return Z[:, 0] if vector else Z
    if T.size > m:
        raise RankDeficiencyError(f"{T.size} columns cannot be independent in R^{m}", T)
    A = phi[:, T]
    Qf, Rf, perm = sla.qr(A, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(Rf))
    if rtol is None:
        rtol = max(A.shape) * np.finfo(float).eps
    if diag[0] == 0.0 or diag[-1] <= rtol * diag[0]:
        raise RankDeficiencyError(
            f"restricted matrix on {T.size} columns is rank deficient", T)
    Zp = sla.solve_triangular(Rf, Qf.T @ B, check_finite=False)
    Z = np.empty_like(Zp)
    Z[perm] = Zp
    return Z[:, 0] if vector else Z


def spectral_norm(A, tol=1e-10, max_iter=10_000):
    """Largest singular value of `A` by power iteration on ``A.T @ A``.

    The first run starts from the normalized all-ones vector. A second run
    starts from the coordinate vector of the largest column, which catches
    the case where the all-ones vector is orthogonal to the top singular
    direction; the larger estimate is returned. Both starts are fixed, so
    the result is deterministic.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.size == 0:
        raise ContractViolationError(f"spectral_norm needs a non-empty matrix, got shape {A.shape}")
    n = A.shape[1]
    col_norms = np.linalg.norm(A, axis=0)
    if not np.any(col_norms):
        return 0.0
    probe = np.zeros(n)
    probe[np.argmax(col_norms)] = 1.0
    return max(_power(A, np.full(n, 1.0 / np.sqrt(n)), tol, max_iter),
               _power(A, probe, tol, max_iter))


def _power(A, v, tol, max_iter):
    Av = A @ v
    est = np.linalg.norm(Av)
    if est == 0.0:
        return 0.0
    for _ in range(max_iter):
        w = A.T @ Av
        v = w / np.linalg.norm(w)
        Av = A @ v
        new = np.linalg.norm(Av)
        if abs(new - est) <= tol * new:
            return float(new)
        est = new
    return float(est)
