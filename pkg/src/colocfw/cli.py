"""Command-line benchmark harness.

Subcommands
-----------
``generate``  draw a synthetic instance and write it to a file.
``run``       run any subset of the six solvers on one instance and write
              per-iteration CSV traces, a summary table and the solutions.
``round``     round a relaxed solution file to a feasible set of boxes.

The default output directory of ``run`` is taken from ``COLOCFW_OUT_DIR``
(falling back to ``./colocfw-out``).  Configuration errors exit with status
2; reaching the iteration cap is a normal outcome and exits with 0.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .domain import TrellisError
from .instances import InstanceFileError, InstanceSpec, generate, load_instance, save_instance
from .objective import ModelParams
from .solvers import SOLVERS, SolverConfig, SolverTrace, solve

OUT_DIR_ENV = "COLOCFW_OUT_DIR"
TRACE_COLUMNS = ("iter", "gap", "objective", "step_kind", "gamma", "active_set_size",
                 "lmo_calls", "elapsed_s")
SUMMARY_COLUMNS = ("solver", "iterations", "iterations_to_eps", "final_gap", "objective",
                   "rounded_objective", "reason", "total_time_s")


class UsageError(Exception):
    """Bad flags or unreadable inputs; reported with exit status 2."""


def _f(x) -> str:
    return format(float(x), ".17g")


# -- instance handling -------------------------------------------------------

def _add_spec_flags(p):
    g = p.add_argument_group("instance")
    g.add_argument("--videos", type=int, default=2)
    g.add_argument("--frames", type=int, default=5, help="frames per video")
    g.add_argument("--boxes", type=int, default=4, help="candidate boxes per frame")
    g.add_argument("--dim", type=int, default=8, help="feature dimension")
    g.add_argument("--noise", type=float, default=0.05, help="planted feature noise level")
    g.add_argument("--edge-threshold", type=float, default=None,
                   help="keep trellis edges with temporal similarity above this (default 0)")
    g.add_argument("--seed", type=int, default=0)


def _spec_from_args(args) -> InstanceSpec:
    try:
        return InstanceSpec(
            n_videos=args.videos, frames_per_video=args.frames, boxes_per_frame=args.boxes,
            feature_dim=args.dim, noise_level=args.noise,
            edge_threshold=0.0 if args.edge_threshold is None else args.edge_threshold,
            seed=args.seed)
    except ValueError as e:
        raise UsageError(f"invalid instance: {e}") from None


def _load(path):
    try:
        return load_instance(path)
    except OSError as e:
        raise UsageError(f"cannot read instance {path}: {e.strerror or e}") from None
    except InstanceFileError as e:
        raise UsageError(f"bad instance file {path}: {e}") from None


def _instance_from_args(args):
    if getattr(args, "instance", None):
        return _load(args.instance)
    try:
        return generate(_spec_from_args(args))
    except ValueError as e:
        raise UsageError(str(e)) from None


# -- generate ---------------------------------------------------------------

def cmd_generate(args) -> int:
    spec = _spec_from_args(args)
    try:
        inst = generate(spec)
    except ValueError as e:
        raise UsageError(str(e)) from None
    try:
        digest = save_instance(inst, args.output)
    except OSError as e:
        raise UsageError(f"cannot write {args.output}: {e.strerror or e}") from None
    print(digest)
    return 0


# -- run ----------------------------------------------------------------------

def _solver_list(text: str) -> list[str]:
    names = [s.strip().lower() for s in text.split(",") if s.strip()]
    if not names:
        raise UsageError("select at least one solver")
    bad = [s for s in names if s not in SOLVERS]
    if bad:
        raise UsageError(f"unknown solver(s) {', '.join(bad)}; choose from {', '.join(SOLVERS)}")
    return list(dict.fromkeys(names))


def write_trace_csv(trace: SolverTrace, path):
    """One row per executed iteration; floats use 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace.records:
            w.writerow([r.iter, _f(r.gap), _f(r.objective), r.step_kind, _f(r.gamma),
                        r.active_set_size, r.lmo_calls, _f(r.elapsed_s)])


def summary_row(trace: SolverTrace) -> dict:
    k = trace.iterations_to_eps
    return {
        "solver": trace.solver,
        "iterations": trace.iterations,
        "iterations_to_eps": "" if k is None else k,
        "final_gap": _f(trace.records[-1].gap) if trace.records else "nan",
        "objective": _f(trace.objective),
        "rounded_objective": _f(trace.rounded_objective),
        "reason": trace.reason,
        "total_time_s": _f(trace.elapsed_s),
    }


def _rounded_json(inst, trace, domain):
    atom = trace.rounded_atom
    return {
        "solver": trace.solver,
        "objective": float(trace.rounded_objective),
        "feasible": bool(domain.is_feasible(atom)),
        "boxes": [list(v) for v in atom.per_video(inst.indexing)],
    }


def _print_table(rows, out=None):
    out = out or sys.stdout
    head = ("solver", "iters", "iters_to_eps", "final_gap", "objective", "rounded", "reason", "time_s")
    body = [(r["solver"], str(r["iterations"]), str(r["iterations_to_eps"] or "-"),
             f"{float(r['final_gap']):.3e}", f"{float(r['objective']):.6f}",
             f"{float(r['rounded_objective']):.6f}", r["reason"], f"{float(r['total_time_s']):.2f}")
            for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    for line in (head, *body):
        print("  ".join(s.ljust(w) for s, w in zip(line, widths)).rstrip(), file=out)


def cmd_run(args) -> int:
    names = _solver_list(args.solvers)
    try:
        params = ModelParams(mu=args.mu, mu_t=args.mu_t, lam=args.lam, kappa=args.kappa)
        cfg = SolverConfig(epsilon=args.epsilon, max_iters=args.max_iters,
                           gamma_schedule=args.gamma_schedule,
                           inner_max_iters=args.inner_max_iters, stop_rule=args.stop_rule)
    except ValueError as e:
        raise UsageError(str(e)) from None
    inst = _instance_from_args(args)
    try:
        problem, domain = inst.build(params, threshold=args.edge_threshold)
    except (TrellisError, ValueError) as e:
        raise UsageError(f"cannot build problem: {e}") from None

    out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "colocfw-out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create {out}: {e.strerror or e}") from None

    rows, curves = [], {}
    for name in names:
        trace = solve(name, problem, domain, cfg)
        write_trace_csv(trace, out / f"trace_{name}.csv")
        np.savetxt(out / f"solution_{name}.txt", trace.iterate, fmt="%.17g")
        with open(out / f"rounded_{name}.json", "w") as fh:
            json.dump(_rounded_json(inst, trace, domain), fh, indent=1)
            fh.write("\n")
        rows.append(summary_row(trace))
        curves[name] = [(r.iter, r.gap) for r in trace.records]

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    if args.plot_data:
        with open(out / "plot_data.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("solver", "iter", "gap"))
            for name, pts in curves.items():
                w.writerows((name, k, _f(g)) for k, g in pts)
    _print_table(rows)
    print(f"wrote traces and summary to {out}")
    return 0


# -- round --------------------------------------------------------------------

def cmd_round(args) -> int:
    inst = _load(args.instance)
    try:
        y = np.loadtxt(args.solution, dtype=float, ndmin=1)
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read solution {args.solution}: {e}") from None
    if y.shape != (inst.indexing.n_boxes,):
        raise UsageError(f"solution has {y.size} entries, instance has {inst.indexing.n_boxes} boxes")
    try:
        domain = inst.domain(args.edge_threshold)
    except TrellisError as e:
        raise UsageError(f"cannot build trellis: {e}") from None
    atom = domain.round_to_atom(y)
    print(json.dumps({
        "feasible": bool(domain.is_feasible(atom)),
        "boxes": [list(v) for v in atom.per_video(inst.indexing)],
    }))
    return 0


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colocfw", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic instance file")
    _add_spec_flags(p)
    p.add_argument("-o", "--output", required=True, help="instance file to write")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run solvers and write traces")
    p.add_argument("--instance", help="instance file; otherwise one is generated from the flags")
    _add_spec_flags(p)
    p.add_argument("--solvers", default=",".join(SOLVERS),
                   help="comma-separated subset of " + ",".join(SOLVERS))
    p.add_argument("--epsilon", type=float, default=1e-5, help="gap tolerance")
    p.add_argument("--max-iters", type=int, default=2000, help="outer iteration cap")
    p.add_argument("--mu", type=float, default=0.6, help="weight of the discriminative term")
    p.add_argument("--mu-t", type=float, default=1.8, help="weight of the temporal term")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="weight of the saliency prior")
    p.add_argument("--kappa", type=float, default=0.01, help="ridge parameter")
    p.add_argument("--gamma-schedule", choices=("3k2", "2k1"), default="3k2",
                   help="sliding step 3/(k+2) or 2/(k+1)")
    p.add_argument("--inner-max-iters", type=int, default=100, help="oracle calls per inner solve")
    p.add_argument("--stop-rule", choices=("wolfe", "cgs"), default="wolfe",
                   help="stopping test of the sliding solvers")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./colocfw-out)")
    p.add_argument("--plot-data", action="store_true", help="also write gap-vs-iteration pairs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("round", help="round a relaxed solution to boxes")
    p.add_argument("--instance", required=True, help="instance file")
    p.add_argument("--solution", required=True, help="text file with one value per box")
    p.add_argument("--edge-threshold", type=float, default=None, help="override the trellis threshold")
    p.set_defaults(func=cmd_round)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"colocfw: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
