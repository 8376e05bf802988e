"""Problem instances, feedback schedules, solver configuration and results."""

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ContractViolationError
from .linalg import as_matrix

__all__ = [
    "ProblemInstance",
    "FeedbackSchedule",
    "SolverConfig",
    "RecoveryResult",
    "eval_schedule",
    "residual_norm",
    "save_instance",
    "load_instance",
]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A joint-sparse recovery problem ``y = phi @ truth + noise``.

    Parameters
    ----------
    phi : (M, N) ndarray
        Sensing matrix, ``M < N``.
    y : (M, L) ndarray
        Observations, ``L < M``.
    truth : (N, L) ndarray, optional
        Ground-truth signal matrix.
    true_support : ndarray of int, optional
        Row support of `truth`. Inferred from `truth` when omitted.
    noise : (M, L) ndarray, optional
    metadata : dict
        Free-form provenance (seed, beta, s, ...), written to the JSON sidecar.
    """

    phi: np.ndarray
    y: np.ndarray
    truth: np.ndarray | None = None
    true_support: np.ndarray | None = None
    noise: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        phi = as_matrix(self.phi, "phi")
        y = as_matrix(self.y, "y")
        m, n = phi.shape
        if y.shape[0] != m:
            raise ContractViolationError(f"y has {y.shape[0]} rows, phi has {m}")
        if not m < n:
            raise ContractViolationError(f"need M < N, got M={m}, N={n}")
        if not y.shape[1] < m:
            raise ContractViolationError(f"need L < M, got L={y.shape[1]}, M={m}")
        object.__setattr__(self, "phi", _frozen(phi))
        object.__setattr__(self, "y", _frozen(y))
        if self.noise is not None:
            noise = as_matrix(self.noise, "noise")
            if noise.shape != y.shape:
                raise ContractViolationError(f"noise shape {noise.shape} != y shape {y.shape}")
            object.__setattr__(self, "noise", _frozen(noise))
        if self.truth is not None:
            truth = as_matrix(self.truth, "truth")
            if truth.shape != (n, y.shape[1]):
                raise ContractViolationError(f"truth shape {truth.shape} != ({n}, {y.shape[1]})")
            object.__setattr__(self, "truth", _frozen(truth))
            model = phi @ truth if self.noise is None else phi @ truth + self.noise
            gap = np.linalg.norm(model - y)
            if gap > 1e-12 * max(np.linalg.norm(y), np.finfo(float).tiny):
                raise ContractViolationError(f"y != phi @ truth + noise (gap {gap:.3e})")
            if self.true_support is None:
                support = np.flatnonzero(np.any(truth != 0, axis=1))
                object.__setattr__(self, "true_support", support)
        if self.true_support is not None:
            support = np.unique(np.asarray(self.true_support, dtype=np.int64))
            if support.size and (support[0] < 0 or support[-1] >= n):
                raise ContractViolationError("true_support indices out of range")
            object.__setattr__(self, "true_support", _frozen(support))

    @property
    def M(self):
        return self.phi.shape[0]

    @property
    def N(self):
        return self.phi.shape[1]

    @property
    def L(self):
        return self.y.shape[1]

    @property
    def sparsity(self):
        return None if self.true_support is None else int(self.true_support.size)

    def relative_error(self, W):
        """``||truth - W||_F / ||truth||_F`` (absolute error when truth is zero)."""
        if self.truth is None:
            raise ContractViolationError("instance has no ground truth")
        num = np.linalg.norm(self.truth - W)
        den = np.linalg.norm(self.truth)
        return float(num / den) if den > 0 else float(num)


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


_KINDS = ("linear", "quadratic", "table")


@dataclass(frozen=True)
class FeedbackSchedule:
    """Non-decreasing index-count function ``f(k)``.

    Use the constructors :meth:`linear`, :meth:`quadratic` and :meth:`table`,
    or :meth:`parse` for the string form (``"linear:6"``, ``"quadratic"``,
    ``"table:1,2,4,8"``).
    """

    kind: str
    slope: int = 1
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ContractViolationError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "linear" and (int(self.slope) != self.slope or self.slope < 1):
            raise ContractViolationError("linear slope must be a positive integer")
        if self.kind == "table":
            vals = tuple(int(v) for v in self.values)
            if not vals or vals[0] < 1 or any(b < a for a, b in zip(vals, vals[1:])):
                raise ContractViolationError("table must be non-empty, positive and non-decreasing")
            object.__setattr__(self, "values", vals)

    @classmethod
    def linear(cls, slope=1):
        return cls("linear", slope=int(slope))

    @classmethod
    def quadratic(cls):
        return cls("quadratic")

    @classmethod
    def table(cls, values):
        return cls("table", values=tuple(values))

    @classmethod
    def parse(cls, text):
        if isinstance(text, FeedbackSchedule):
            return text
        kind, _, arg = str(text).strip().partition(":")
        kind = kind.lower()
        if kind == "linear":
            return cls.linear(int(arg) if arg else 1)
        if kind == "quadratic":
            return cls.quadratic()
        if kind == "table":
            return cls.table(int(v) for v in arg.split(",") if v.strip())
        raise ContractViolationError(f"cannot parse schedule {text!r}")

    def __call__(self, k):
        """Uncapped ``f(k)``; ``f(0) == 0`` by convention."""
        k = int(k)
        if k < 0:
            raise ContractViolationError("k must be non-negative")
        if k == 0:
            return 0
        if self.kind == "linear":
            return self.slope * k
        if self.kind == "quadratic":
            return k * k
        return self.values[min(k, len(self.values)) - 1]

    def __str__(self):
        if self.kind == "linear":
            return f"linear:{self.slope}"
        if self.kind == "table":
            return "table:" + ",".join(map(str, self.values))
        return "quadratic"


def eval_schedule(s, k, cap):
    """Number of rows kept at iteration `k`: ``min(f(k), cap)``.

    A table schedule queried past its last entry holds its last value.
    """
    if k < 1 or cap < 1:
        raise ContractViolationError("k and cap must be >= 1")
    return min(s(k), int(cap))


@dataclass(frozen=True)
class SolverConfig:
    """Inputs of the OSNST iteration besides the data.

    ``epsilon=None`` selects a relative stop threshold
    ``rel_epsilon * ||Y||_F``.
    """

    epsilon: float | None = None
    max_iter: int = 300
    schedule: FeedbackSchedule = field(default_factory=lambda: FeedbackSchedule.linear(6))
    rank_tol: float = 1e-10
    tie_break: str = "lowest-index"
    rel_epsilon: float = 1e-12
    verbose: bool = False

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon >= 0:
            raise ContractViolationError("epsilon must be >= 0")
        if int(self.max_iter) < 1:
            raise ContractViolationError("max_iter must be >= 1")
        if self.tie_break != "lowest-index":
            raise ContractViolationError(f"unsupported tie_break {self.tie_break!r}")
        if not isinstance(self.schedule, FeedbackSchedule):
            object.__setattr__(self, "schedule", FeedbackSchedule.parse(self.schedule))

    def threshold(self, y):
        if self.epsilon is not None:
            return float(self.epsilon)
        return self.rel_epsilon * float(np.linalg.norm(y))


@dataclass
class RecoveryResult:
    """Outcome of a recovery run.

    ``support_history`` holds every selected set only when the solver ran in
    verbose mode; otherwise it holds the final set alone.
    """

    estimate: np.ndarray
    support: np.ndarray
    residual_history: list
    iterations: int
    converged: bool
    wall_time: float
    support_history: list = field(default_factory=list)
    epsilon: float = 0.0
    solver: str = "osnst"
    failure: str | None = None
    clamped: bool = False
    rank_drops: int = 0

    @property
    def failed(self):
        return self.failure is not None

    @property
    def final_residual(self):
        return self.residual_history[-1] if self.residual_history else None

    def to_dict(self, include_estimate=False):
        out = {
            "solver": self.solver,
            "iterations": self.iterations,
            "converged": self.converged,
            "failed": self.failed,
            "failure": self.failure,
            "epsilon": self.epsilon,
            "wall_time": self.wall_time,
            "support": [int(i) for i in self.support],
            "residual_history": [float(r) for r in self.residual_history],
            "clamped": self.clamped,
            "rank_drops": self.rank_drops,
        }
        if self.support_history:
            out["support_history"] = [[int(i) for i in t] for t in self.support_history]
        if include_estimate:
            out["estimate"] = self.estimate.tolist()
        return out


def residual_norm(p, W):
    """Frobenius norm of ``p.y - p.phi @ W``."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    if W.shape != (p.N, p.L):
        raise ContractViolationError(f"W has shape {W.shape}, expected ({p.N}, {p.L})")
    return float(np.linalg.norm(p.y - p.phi @ W))


# Binary layout (little endian):
#   magic b"MMVP", u32 version, u32 block count
#   per block: 8-byte ASCII name (NUL padded), u64 rows, u64 cols,
#              rows*cols values, float64 row-major (int64 for "support")
_MAGIC = b"MMVP"
_VERSION = 1
_BLOCKS = ("phi", "y", "truth", "support", "noise")


def save_instance(p, path):
    """Write `p` to ``path`` (binary) and ``path.with_suffix('.json')`` (metadata).

    Returns the pair of written paths.
    """
    path = Path(path)
    blocks = [("phi", p.phi), ("y", p.y)]
    if p.truth is not None:
        blocks.append(("truth", p.truth))
    if p.true_support is not None:
        blocks.append(("support", p.true_support.reshape(1, -1)))
    if p.noise is not None:
        blocks.append(("noise", p.noise))
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<II", _VERSION, len(blocks)))
            for name, arr in blocks:
                dtype = "<i8" if name == "support" else "<f8"
                arr = np.ascontiguousarray(arr, dtype=dtype)
                rows, cols = arr.shape
                fh.write(name.encode("ascii").ljust(8, b"\0"))
                fh.write(struct.pack("<QQ", rows, cols))
                fh.write(arr.tobytes(order="C"))
        meta = {"M": p.M, "N": p.N, "L": p.L, "s": p.sparsity, **_jsonable(p.metadata)}
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write instance to {path}: {exc}") from exc
    return path, sidecar


def load_instance(path):
    """Inverse of :func:`save_instance`."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise ContractViolationError(f"{path}: not an instance file")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise ContractViolationError(f"{path}: unsupported version {version}")
    off = 12
    arrays = {}
    for _ in range(count):
        name = raw[off:off + 8].rstrip(b"\0").decode("ascii")
        rows, cols = struct.unpack_from("<QQ", raw, off + 8)
        off += 24
        dtype = "<i8" if name == "support" else "<f8"
        nbytes = rows * cols * 8
        arrays[name] = np.frombuffer(raw, dtype=dtype, count=rows * cols, offset=off).reshape(rows, cols).copy()
        off += nbytes
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    for key in ("M", "N", "L", "s"):
        meta.pop(key, None)
    support = arrays.get("support")
    return ProblemInstance(
        phi=arrays["phi"],
        y=arrays["y"],
        truth=arrays.get("truth"),
        true_support=None if support is None else support.ravel(),
        noise=arrays.get("noise"),
        metadata=meta,
    )


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.generic):
            v = v.item()
        elif isinstance(v, float) and not math.isfinite(v):
            v = str(v)
        out[k] = v
    return out
