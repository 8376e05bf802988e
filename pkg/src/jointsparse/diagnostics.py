"""Brute-force restricted isometry constants, spark and convergence certificate.

All quantities here enumerate column subsets, so they are only practical for
small matrices (a few dozen columns at most). Enumeration is capped at
``MAX_SUBSETS``; larger problems raise :class:`SubsetLimitError` unless a
sampled lower bound is requested explicitly.
"""

import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ContractViolationError, DegenerateInputError, SubsetLimitError
from .linalg import as_matrix
from .model import FeedbackSchedule, eval_schedule

__all__ = [
    "MAX_SUBSETS",
    "RipReport",
    "ConvergenceCertificate",
    "ric_bruteforce",
    "ric_lower_bound",
    "pric_bruteforce",
    "theta_bruteforce",
    "preconditioned",
    "spark_and_uniqueness",
    "alpha_of",
    "rip_report",
    "certificate",
    "to_json",
]

MAX_SUBSETS = 1_000_000
_CHUNK = 4096


@dataclass(frozen=True)
class RipReport:
    s: int
    delta_s: float
    gamma_s: float
    theta_s: float
    subsets_examined: int
    exact: bool = True


@dataclass(frozen=True)
class ConvergenceCertificate:
    """Contraction factor and noise gain for one support-size level.

    ``rho`` and ``kappa`` are ``inf`` when ``delta >= 1``.
    """

    level: int
    rho: float
    kappa: float
    satisfied: bool
    delta: float
    gamma: float
    theta: float
    alpha: float


def _check_guard(n, s, limit):
    count = math.comb(n, s)
    if count > limit:
        raise SubsetLimitError(f"C({n}, {s}) = {count} subsets exceeds the limit of {limit}")
    return count


def _subset_chunks(n, s):
    it = itertools.combinations(range(n), s)
    while True:
        block = list(itertools.islice(it, _CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def _gram_deviation(A, subsets):
    """``max ||I - A_S.T A_S||_2`` over the rows of `subsets`."""
    cols = A[:, subsets]                     # (M, n_sub, s)
    gram = np.einsum("mik,mil->ikl", cols, cols)
    ev = np.linalg.eigvalsh(gram)
    return float(max(np.max(ev[:, -1] - 1.0), np.max(1.0 - ev[:, 0])))


def ric_bruteforce(phi, s, max_subsets=MAX_SUBSETS):
    """Restricted isometry constant ``delta_s`` by exhaustive enumeration.

    Only subsets of size exactly ``s`` are visited: by eigenvalue interlacing
    the smaller ones cannot give a larger deviation.
    """
    A = as_matrix(phi, "phi")
    n = A.shape[1]
    s = int(s)
    if not 1 <= s <= n:
        raise ContractViolationError(f"s={s} outside [1, {n}]")
    _check_guard(n, s, max_subsets)
    return max(_gram_deviation(A, chunk) for chunk in _subset_chunks(n, s))


def ric_lower_bound(phi, s, n_samples=10_000, rng=None):
    """Lower bound on ``delta_s`` from randomly sampled column subsets."""
    A = as_matrix(phi, "phi")
    n = A.shape[1]
    rng = np.random.default_rng(rng)
    subsets = np.array([rng.choice(n, s, replace=False) for _ in range(n_samples)])
    return max(_gram_deviation(A, subsets[i:i + _CHUNK]) for i in range(0, n_samples, _CHUNK))


def _inv_sqrt_gram(A):
    ev, V = np.linalg.eigh(A @ A.T)
    if ev[0] <= 0:
        raise ContractViolationError("phi @ phi.T is singular")
    return (V / np.sqrt(ev)) @ V.T


def preconditioned(phi, power=0.5):
    """``(phi phi.T)^-power @ phi`` for ``power`` in {0.5, 1}."""
    A = as_matrix(phi, "phi")
    if power == 0.5:
        return _inv_sqrt_gram(A) @ A
    if power == 1:
        return np.linalg.solve(A @ A.T, A)
    raise ContractViolationError("power must be 0.5 or 1")


def pric_bruteforce(phi, s, max_subsets=MAX_SUBSETS, check=True, atol=1e-10):
    """Preconditioned RIC ``gamma_s = max ||I - phi_S.T (phi phi.T)^-1 phi_S||_2``.

    With ``check=True`` the value is recomputed as the plain RIC of
    ``(phi phi.T)^-1/2 phi`` and an ``AssertionError`` is raised if the two
    routes disagree by more than `atol`.
    """
    A = as_matrix(phi, "phi")
    n = A.shape[1]
    s = int(s)
    if not 1 <= s <= n:
        raise ContractViolationError(f"s={s} outside [1, {n}]")
    _check_guard(n, s, max_subsets)
    # phi_S.T G^-1 phi_S = (L^-1 phi_S).T (L^-1 phi_S) with G = L L.T
    chol = np.linalg.cholesky(A @ A.T)
    B = np.linalg.solve(chol, A)
    gamma = max(_gram_deviation(B, chunk) for chunk in _subset_chunks(n, s))
    if check:
        other = ric_bruteforce(preconditioned(A, 0.5), s, max_subsets)
        if abs(other - gamma) > atol:
            raise AssertionError(f"P-RIC routes disagree: {gamma!r} vs {other!r}")
    return gamma


def theta_bruteforce(phi, t, max_subsets=MAX_SUBSETS):
    """RIC of ``(phi phi.T)^-1 phi``."""
    return ric_bruteforce(preconditioned(phi, 1), t, max_subsets)


def spark_and_uniqueness(phi, Y, rank_tol=1e-10, max_subsets=MAX_SUBSETS):
    """Spark of `phi` and the uniqueness bound ``(spark + rank(Y) - 1) / 2``.

    Subsets are tested in increasing size. When no subset of size ``<= M``
    is dependent the spark is reported as ``M + 1``.

    Returns
    -------
    spark : int
    bound : float
    """
    A = as_matrix(phi, "phi")
    Y = as_matrix(Y, "Y")
    m, n = A.shape
    top = min(m, n)
    total = sum(math.comb(n, k) for k in range(1, top + 1))
    if total > max_subsets:
        raise SubsetLimitError(f"{total} subsets exceeds the limit of {max_subsets}")
    spark = m + 1
    eps_rel = max(m, n) * np.finfo(float).eps
    for k in range(1, top + 1):
        if _any_dependent(A, k, eps_rel):
            spark = k
            break
    sv = np.linalg.svd(Y, compute_uv=False)
    rank_y = int(np.count_nonzero(sv > rank_tol * sv[0])) if sv[0] > 0 else 0
    return spark, (spark + rank_y - 1) / 2


def _any_dependent(A, k, eps_rel):
    scale = np.linalg.norm(A, 2)
    for chunk in _subset_chunks(A.shape[1], k):
        sv = np.linalg.svd(A[:, chunk].transpose(1, 0, 2), compute_uv=False)
        if np.any(sv[:, -1] <= eps_rel * scale):
            return True
    return False


def alpha_of(X, rank_tol=1e-10):
    """Ratio of the largest to the smallest nonzero singular value of `X`."""
    X = as_matrix(X, "X")
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[0] == 0.0:
        raise DegenerateInputError("alpha is undefined for the zero matrix")
    kept = sv[sv > rank_tol * sv[0]]
    return float(kept[0] / kept[-1])


def rip_report(phi, s, max_subsets=MAX_SUBSETS, rng=None):
    """:class:`RipReport` at level `s`; sampled lower bounds past the guard."""
    A = as_matrix(phi, "phi")
    n = A.shape[1]
    count = math.comb(n, s)
    if count <= max_subsets:
        return RipReport(
            s=s,
            delta_s=ric_bruteforce(A, s, max_subsets),
            gamma_s=pric_bruteforce(A, s, max_subsets),
            theta_s=theta_bruteforce(A, s, max_subsets),
            subsets_examined=count,
        )
    rng = np.random.default_rng(rng)
    n_samples = 10_000
    return RipReport(
        s=s,
        delta_s=ric_lower_bound(A, s, n_samples, rng),
        gamma_s=ric_lower_bound(preconditioned(A, 0.5), s, n_samples, rng),
        theta_s=ric_lower_bound(preconditioned(A, 1), s, n_samples, rng),
        subsets_examined=n_samples,
        exact=False,
    )


def certificate_from_constants(level, delta, gamma, theta, alpha):
    """Assemble rho and kappa from already computed constants."""
    satisfied = 2 * alpha**2 * gamma**2 + delta**2 < 1
    if delta >= 1:
        rho = kappa = math.inf
    else:
        rho = math.sqrt(2 * alpha**2 * gamma**2 / (1 - delta**2))
        kappa = (math.sqrt(1 + delta) / (1 - delta)
                 + math.sqrt(2 * alpha**2 * (1 + theta)) / math.sqrt(1 - delta**2))
    return ConvergenceCertificate(level, rho, kappa, bool(satisfied), delta, gamma, theta, alpha)


def certificate(phi, X_truth, schedule, k, rank_tol=1e-10, max_subsets=MAX_SUBSETS):
    """Convergence certificate at iteration `k`.

    The level is ``s + f(k) + f(k-1)`` (clamped to ``N``), with ``f`` capped at
    ``M - 1`` as in the solver and ``s`` the row support size of `X_truth`.
    The condition-number factor is ``alpha_of(X_truth)``.
    """
    A = as_matrix(phi, "phi")
    X = as_matrix(X_truth, "X_truth")
    m, n = A.shape
    schedule = FeedbackSchedule.parse(schedule)
    s = int(np.count_nonzero(np.any(X != 0, axis=1)))
    prev = eval_schedule(schedule, k - 1, m - 1) if k > 1 else 0
    level = min(s + eval_schedule(schedule, k, m - 1) + prev, n)
    delta = ric_bruteforce(A, level, max_subsets)
    gamma = pric_bruteforce(A, level, max_subsets)
    theta = theta_bruteforce(A, level, max_subsets)
    return certificate_from_constants(level, delta, gamma, theta, alpha_of(X, rank_tol))


def to_json(record, **kwargs):
    """Serialize a :class:`RipReport` or :class:`ConvergenceCertificate`."""
    d = asdict(record)
    d = {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}
    d["kind"] = type(record).__name__
    return json.dumps(d, sort_keys=True, **kwargs)
