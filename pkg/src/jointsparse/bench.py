"""Synthetic problem generation and Monte Carlo recovery sweeps.

A sweep runs every (sparsity, trial) pair on its own generated instance and
hands the same instance to every requested solver/schedule combination. Seeds
are derived per (seed, s, trial), so results do not depend on how trials are
scheduled across threads.
"""

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .exceptions import ContractViolationError, RankDeficiencyError
from .linalg import RowPseudoInverse
from .model import FeedbackSchedule, ProblemInstance, SolverConfig
from .solver import osnst_solve, somp_solve

__all__ = [
    "ar1_rows",
    "gen_problem",
    "instance_rng",
    "ExperimentSpec",
    "TrialRecord",
    "ReportRow",
    "ExperimentReport",
    "run_sweep",
    "emit_report",
    "read_report_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("solver", "schedule", "s", "success_freq", "mean_time_s", "mean_iters", "failed_trials")
SOLVERS = ("osnst", "somp")
SOMP_SCHEDULE = "oracle-s"


def ar1_rows(rng, s, L, beta):
    """`s` rows of length `L` following ``x_j = beta x_{j-1} + (1 - beta) e_j``.

    The first column and the innovations ``e_j`` are i.i.d. standard normal.
    """
    rows = np.empty((s, L))
    rows[:, 0] = rng.standard_normal(s)
    for j in range(1, L):
        rows[:, j] = beta * rows[:, j - 1] + (1 - beta) * rng.standard_normal(s)
    return rows


def gen_problem(M, N, L, s, beta, rng, noise_level=0.0):
    """Gaussian sensing matrix and an AR(1)-correlated row-sparse signal.

    Parameters
    ----------
    M, N, L, s : int
        Measurements, signal length, snapshots and row sparsity.
    beta : float
        AR(1) coefficient in ``[0, 1]``; ``beta = 1`` repeats the first snapshot.
    rng : numpy.random.Generator or seed
    noise_level : float, default=0
        If positive, Gaussian noise scaled to ``noise_level * ||phi X||_F``
        is added to the observations.

    Returns
    -------
    ProblemInstance
    """
    if not 0 <= s <= N:
        raise ContractViolationError(f"s={s} outside [0, N={N}]")
    if not 0 <= beta <= 1:
        raise ContractViolationError(f"beta={beta} outside [0, 1]")
    if beta == 1 and L > 1:
        warnings.warn("beta=1 makes every snapshot identical, so rank(Y) = 1 < L", stacklevel=2)
    rng = np.random.default_rng(rng)
    phi = rng.standard_normal((M, N))
    support = np.sort(rng.choice(N, size=s, replace=False))
    X = np.zeros((N, L))
    X[support] = ar1_rows(rng, s, L, beta)
    Y = phi @ X
    noise = None
    if noise_level > 0:
        noise = rng.standard_normal(Y.shape)
        noise *= noise_level * np.linalg.norm(Y) / np.linalg.norm(noise)
        Y = Y + noise
    return ProblemInstance(phi, Y, truth=X, true_support=support, noise=noise,
                           metadata={"beta": float(beta), "s": int(s)})


def instance_rng(seed, s, trial):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(s), int(trial)]))


@dataclass
class ExperimentSpec:
    """Parameters of a sparsity sweep; loadable from a JSON document."""

    M: int
    N: int
    L: int
    sparsity_range: tuple
    trials: int = 100
    beta: float = 0.5
    schedules: list = field(default_factory=lambda: [FeedbackSchedule.linear(6)])
    solvers: list = field(default_factory=lambda: ["osnst"])
    seed: int = 0
    success_tol: float = 1e-4
    max_iter: int = 300
    epsilon: float | None = None
    timing: bool = True

    def __post_init__(self):
        rng_ = tuple(int(v) for v in self.sparsity_range)
        if len(rng_) not in (2, 3):
            raise ContractViolationError("sparsity_range is [first, last] or [first, last, step]")
        self.sparsity_range = rng_
        self.schedules = [FeedbackSchedule.parse(s) for s in self.schedules]
        self.solvers = [str(s).lower() for s in self.solvers]
        if self.trials < 1:
            raise ContractViolationError("trials must be >= 1")
        if not 0 <= self.beta < 1:
            raise ContractViolationError("beta must lie in [0, 1)")
        if not self.L < self.M < self.N:
            raise ContractViolationError("need L < M < N")
        levels = self.sparsity_levels
        if not levels or levels[0] < 1 or levels[-1] > self.M - 1:
            raise ContractViolationError(f"sparsity levels must lie in [1, M-1={self.M - 1}]")
        bad = set(self.solvers) - set(SOLVERS)
        if bad or not self.solvers:
            raise ContractViolationError(f"solvers must be a non-empty subset of {SOLVERS}")
        if not 0 <= self.seed < 2**64:
            raise ContractViolationError("seed must be an unsigned 64-bit integer")

    @property
    def sparsity_levels(self):
        first, last, *step = self.sparsity_range
        return list(range(first, last + 1, step[0] if step else 1))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ContractViolationError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        d = asdict(self)
        d["sparsity_range"] = list(self.sparsity_range)
        d["schedules"] = [str(s) for s in self.schedules]
        return d

    def combos(self):
        """(solver, schedule label, schedule or None) in report order."""
        out = []
        for solver in self.solvers:
            if solver == "osnst":
                out.extend(("osnst", str(sc), sc) for sc in self.schedules)
            else:
                out.append(("somp", SOMP_SCHEDULE, None))
        return out


@dataclass(frozen=True)
class TrialRecord:
    solver: str
    schedule: str
    s: int
    trial: int
    rel_error: float
    success: bool
    iterations: int
    wall_time: float
    failed: bool


@dataclass(frozen=True)
class ReportRow:
    solver: str
    schedule: str
    s: int
    success_freq: float
    mean_time_s: float
    mean_iters: float
    failed_trials: int
    trials: int
    mean_iters_success: float = math.nan


@dataclass
class ExperimentReport:
    rows: list
    spec: dict = field(default_factory=dict)
    trials: list = field(default_factory=list)

    def row(self, solver, schedule, s):
        schedule = str(schedule)
        for r in self.rows:
            if (r.solver, r.schedule, r.s) == (solver, schedule, s):
                return r
        raise KeyError((solver, schedule, s))

    def curve(self, solver, schedule, metric="success_freq"):
        """``{s: value}`` for one solver/schedule pair."""
        schedule = str(schedule)
        return {r.s: getattr(r, metric) for r in self.rows if (r.solver, r.schedule) == (solver, schedule)}

    def critical_sparsity(self, solver, schedule, level=0.5):
        """Largest s whose success frequency is at least `level` (0 if none)."""
        hits = [s for s, f in self.curve(solver, schedule).items() if f >= level]
        return max(hits, default=0)

    def verify(self, success_tol):
        """Re-check every success flag against its stored relative error."""
        for t in self.trials:
            if t.success != (not t.failed and t.rel_error <= success_tol):
                raise AssertionError(f"inconsistent success flag in {t}")


def _run_trial(spec, combos, s, trial):
    p = gen_problem(spec.M, spec.N, spec.L, s, spec.beta, instance_rng(spec.seed, s, trial))
    records = []
    pinv = None
    for solver, label, schedule in combos:
        t0 = time.perf_counter()
        failed = False
        try:
            if solver == "osnst":
                if pinv is None:
                    pinv = RowPseudoInverse(p.phi)
                cfg = SolverConfig(epsilon=spec.epsilon, max_iter=spec.max_iter, schedule=schedule)
                res = osnst_solve(p, cfg, pinv=pinv)
            else:
                res = somp_solve(p, s)
            failed = res.failed
            W, iters = res.estimate, res.iterations
        except RankDeficiencyError:
            failed = True
            W, iters = np.zeros((p.N, p.L)), 0
        elapsed = time.perf_counter() - t0
        err = p.relative_error(W)
        records.append(TrialRecord(
            solver, label, s, trial, err,
            success=bool(not failed and err <= spec.success_tol),
            iterations=int(iters),
            wall_time=elapsed if spec.timing else math.nan,
            failed=bool(failed),
        ))
    return records


def run_sweep(spec, threads=1, progress=None):
    """Run the Monte Carlo sweep described by `spec`.

    Parameters
    ----------
    spec : ExperimentSpec
    threads : int, default=1
        Worker threads. BLAS is pinned to one thread per worker while the
        sweep runs, which also keeps results identical across thread counts.
    progress : callable, optional
        Called with ``(done, total)`` after each finished trial.

    Returns
    -------
    ExperimentReport
    """
    combos = spec.combos()
    tasks = [(s, t) for s in spec.sparsity_levels for t in range(spec.trials)]
    results = {}
    with threadpool_limits(limits=1, user_api="blas"):
        if threads <= 1:
            for i, (s, t) in enumerate(tasks, 1):
                results[s, t] = _run_trial(spec, combos, s, t)
                if progress:
                    progress(i, len(tasks))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = {key: pool.submit(_run_trial, spec, combos, *key) for key in tasks}
                for i, (key, fut) in enumerate(futures.items(), 1):
                    results[key] = fut.result()
                    if progress:
                        progress(i, len(tasks))
    trials = [rec for key in tasks for rec in results[key]]
    rows = []
    for solver, label, _ in combos:
        for s in spec.sparsity_levels:
            recs = [r for r in trials if (r.solver, r.schedule, r.s) == (solver, label, s)]
            ok = [r for r in recs if r.success]
            rows.append(ReportRow(
                solver=solver,
                schedule=label,
                s=s,
                success_freq=len(ok) / len(recs),
                mean_time_s=float(np.mean([r.wall_time for r in recs])),
                mean_iters=float(np.mean([r.iterations for r in recs])),
                failed_trials=sum(r.failed for r in recs),
                trials=len(recs),
                mean_iters_success=float(np.mean([r.iterations for r in ok])) if ok else math.nan,
            ))
    report = ExperimentReport(rows=rows, spec=spec.to_dict(), trials=trials)
    report.verify(spec.success_tol)
    return report


def _fmt(v):
    return f"{v:.6g}"


def report_csv(report):
    """CSV text of the per-(solver, schedule, s) summary."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.rows:
        w.writerow([r.solver, r.schedule, r.s, _fmt(r.success_freq), _fmt(r.mean_time_s),
                    _fmt(r.mean_iters), r.failed_trials])
    return buf.getvalue()


def read_report_csv(path):
    """Parse a summary CSV written by :func:`emit_report` into ReportRows."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ContractViolationError(f"{path}: unexpected header {reader.fieldnames}")
        for d in reader:
            rows.append(ReportRow(
                solver=d["solver"], schedule=d["schedule"], s=int(d["s"]),
                success_freq=float(d["success_freq"]), mean_time_s=float(d["mean_time_s"]),
                mean_iters=float(d["mean_iters"]), failed_trials=int(d["failed_trials"]),
                trials=-1,
            ))
    return rows


_METRICS = {
    "success_freq": "Frequency of exact recovery",
    "mean_time_s": "Mean running time (s)",
    "mean_iters": "Mean iterations",
}


def _plot(report, metric, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "jointsparse", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        seen = []
        for r in report.rows:
            if (r.solver, r.schedule) not in seen:
                seen.append((r.solver, r.schedule))
        for solver, schedule in seen:
            curve = report.curve(solver, schedule, metric)
            xs = sorted(curve)
            label = solver if solver == "somp" else f"{solver} f={schedule}"
            ax.plot(xs, [curve[x] for x in xs], marker="o", ms=3, label=label)
        ax.set_xlabel("sparsity s")
        ax.set_ylabel(_METRICS[metric])
        if metric == "success_freq":
            ax.set_ylim(-0.05, 1.05)
        if seen:
            ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_report(report, out_dir, plots=True):
    """Write ``report.csv``, ``trials.csv``, ``provenance.json`` and SVG charts.

    Returns
    -------
    dict
        Mapping from artifact name to written path.
    """
    out = Path(out_dir)
    written = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        written["csv"] = out / "report.csv"
        written["csv"].write_text(report_csv(report))

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("solver", "schedule", "s", "trial", "rel_error", "success", "iterations", "failed"))
        for t in report.trials:
            w.writerow((t.solver, t.schedule, t.s, t.trial, repr(t.rel_error), int(t.success),
                        t.iterations, int(t.failed)))
        written["trials"] = out / "trials.csv"
        written["trials"].write_text(buf.getvalue())

        from . import __version__

        prov = {"package": "jointsparse", "version": __version__, "spec": report.spec,
                "csv_header": list(CSV_HEADER)}
        written["provenance"] = out / "provenance.json"
        written["provenance"].write_text(json.dumps(prov, indent=2, sort_keys=True) + "\n")

        if plots and report.rows:
            for metric in _METRICS:
                path = out / f"{metric}.svg"
                _plot(report, metric, path)
                written[metric] = path
    except OSError as exc:
        raise OSError(f"cannot write report under {out}: {exc}") from exc
    return written
