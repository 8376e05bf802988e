"""Command-line entry point: ``jointsparse {gen,solve,sweep,diagnose}``."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics
from .bench import ExperimentSpec, emit_report, gen_problem, run_sweep
from .exceptions import SubsetLimitError
from .model import FeedbackSchedule, SolverConfig, load_instance, save_instance
from .solver import osnst_solve, somp_solve

log = logging.getLogger("jointsparse")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
    p.add_argument("--out", type=Path, default=None, help="output file or directory")
    p.add_argument("--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="jointsparse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic problem instance")
    _common(g)
    g.add_argument("--M", type=int, default=60)
    g.add_argument("--N", type=int, default=200)
    g.add_argument("--L", type=int, default=5)
    g.add_argument("--s", type=int, default=10)
    g.add_argument("--beta", type=float, default=0.5)
    g.add_argument("--noise", type=float, default=0.0, help="noise level relative to ||phi X||_F")

    s = sub.add_parser("solve", help="solve one instance and print the result as JSON")
    _common(s)
    s.add_argument("instance", type=Path)
    s.add_argument("--solver", choices=("osnst", "somp"), default="osnst")
    s.add_argument("--schedule", default="linear:6")
    s.add_argument("--max-iter", type=int, default=300)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--sparsity", type=int, default=None, help="row budget for somp (default: true s)")
    s.add_argument("--save-estimate", action="store_true", help="include W in the JSON output")

    w = sub.add_parser("sweep", help="run a phase-transition sweep from an ExperimentSpec JSON")
    _common(w)
    w.add_argument("--spec", type=Path, required=True)
    w.add_argument("--threads", type=int, default=1)
    w.add_argument("--no-timing", action="store_true",
                   help="do not record wall times (makes report.csv byte-reproducible)")
    w.add_argument("--no-plots", action="store_true")

    d = sub.add_parser("diagnose", help="brute-force RIC / P-RIC / spark / certificate")
    _common(d)
    d.add_argument("instance", type=Path)
    d.add_argument("--levels", type=int, nargs="+", default=[1, 2])
    d.add_argument("--schedule", default="linear:1")
    d.add_argument("--k", type=int, default=1, help="iteration index for the certificate")
    d.add_argument("--max-subsets", type=int, default=diagnostics.MAX_SUBSETS)
    return parser


def cmd_gen(args):
    seed = 0 if args.seed is None else args.seed
    p = gen_problem(args.M, args.N, args.L, args.s, args.beta, np.random.default_rng(seed),
                    noise_level=args.noise)
    p.metadata["seed"] = seed
    out = args.out or Path(f"instance_M{args.M}_N{args.N}_L{args.L}_s{args.s}.bin")
    paths = save_instance(p, out)
    print(json.dumps({"instance": str(paths[0]), "metadata": str(paths[1])}))
    return 0


def cmd_solve(args):
    p = load_instance(args.instance)
    if args.solver == "osnst":
        cfg = SolverConfig(epsilon=args.epsilon, max_iter=args.max_iter,
                           schedule=FeedbackSchedule.parse(args.schedule), verbose=args.verbose)
        res = osnst_solve(p, cfg)
    else:
        budget = args.sparsity or p.sparsity
        if not budget:
            raise SystemExit("somp needs --sparsity when the instance has no ground truth")
        res = somp_solve(p, budget, verbose=args.verbose)
    out = res.to_dict(include_estimate=args.save_estimate)
    if p.truth is not None:
        out["relative_error"] = p.relative_error(res.estimate)
    text = json.dumps(out, indent=2)
    if args.out:
        args.out.write_text(text + "\n")
    print(text)
    return 0


def cmd_sweep(args):
    spec = ExperimentSpec.load(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    if args.no_timing:
        spec.timing = False

    def progress(done, total):
        log.info("trial %d/%d", done, total)

    report = run_sweep(spec, threads=args.threads, progress=progress if args.verbose else None)
    paths = emit_report(report, args.out or Path("sweep_out"), plots=not args.no_plots)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
    return 0


def cmd_diagnose(args):
    p = load_instance(args.instance)
    records = []
    for level in args.levels:
        records.append(json.loads(diagnostics.to_json(
            diagnostics.rip_report(p.phi, level, max_subsets=args.max_subsets, rng=args.seed))))
    try:
        spark, bound = diagnostics.spark_and_uniqueness(p.phi, p.y, max_subsets=args.max_subsets)
        records.append({"kind": "Spark", "spark": spark, "uniqueness_bound": bound})
    except SubsetLimitError as exc:
        records.append({"kind": "Spark", "error": str(exc)})
    if p.truth is not None and np.any(p.truth):
        try:
            cert = diagnostics.certificate(p.phi, p.truth, args.schedule, args.k,
                                           max_subsets=args.max_subsets)
            records.append(json.loads(diagnostics.to_json(cert)))
        except SubsetLimitError as exc:
            records.append({"kind": "ConvergenceCertificate", "error": str(exc)})
    text = "\n".join(json.dumps(r, sort_keys=True) for r in records)
    if args.out:
        args.out.write_text(text + "\n")
    print(text)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"gen": cmd_gen, "solve": cmd_solve, "sweep": cmd_sweep, "diagnose": cmd_diagnose}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
