"""Command-line entry point: single solves, seeded benchmarks, oracle runs.

Every command writes a manifest before the long computation starts (end
timestamp null until completion), so interrupted runs are identifiable.
Benchmark fan-out is one process per instance, capped by RVOPT_THREADS.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .alm_solver import AlmConfig, SolveStatus, save_trace, solve
from .instances import GeneratorConfig, generate, warm_start
from .minlp_oracle import OracleLimits, save_oracle_report, solve_exact
from .model import load_instance
from .smoothing import SmoothingConfig, SoftminMethod
from .transcription import Transcription, save_solution

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_BAD_INPUT = 2


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rvopt",
        description="Trajectory optimization for energy-sharing UAV-UGV missions")
    sub = parser.add_subparsers(required=True)

    sp = sub.add_parser("solve", help="solve one instance file")
    sp.add_argument("--instance", required=True)
    _add_smoothing_flags(sp)
    _add_alm_flags(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_solve)

    bp = sub.add_parser("benchmark", help="seeded random-instance sweep")
    bp.add_argument("--seeds", required=True, help="inclusive range A..B")
    bp.add_argument("--m-a", type=int, required=True, dest="m_a")
    _add_smoothing_flags(bp)
    _add_alm_flags(bp)
    bp.add_argument("--out", required=True)
    bp.set_defaults(func=cmd_benchmark)

    op = sub.add_parser("oracle", help="exact micro-instance comparison")
    op.add_argument("--instance", required=True)
    op.add_argument("--max-n", type=int, default=6, dest="max_n")
    op.add_argument("--max-m-a", type=int, default=2, dest="max_m_a")
    _add_smoothing_flags(op)
    op.add_argument("--out", required=True)
    op.set_defaults(func=cmd_oracle)
    return parser


def _add_smoothing_flags(p) -> None:
    p.add_argument("--method", choices=["lp", "lse"], default="lp")
    p.add_argument("--p-exp", type=int, default=3, dest="p_exp")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=1e2)
    p.add_argument("--delta", type=float, default=1.0)


def _add_alm_flags(p) -> None:
    p.add_argument("--budget-s", type=float, default=None, dest="budget_s")
    p.add_argument("--max-outer", type=int, default=30, dest="max_outer")
    p.add_argument("--target-violation", type=float, default=None,
                   dest="target_violation")


def _smoothing_from_args(args) -> SmoothingConfig:
    method = SoftminMethod.LP_NORM if args.method == "lp" else SoftminMethod.LOG_SUM_EXP
    return SmoothingConfig(method=method, delta=args.delta, epsilon=args.eps,
                           p_exp=args.p_exp, tau=args.tau)


def _alm_from_args(args) -> AlmConfig:
    return AlmConfig(time_budget=args.budget_s, max_outer=args.max_outer,
                     target_violation=args.target_violation)


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


class Manifest(object):
    """Reproducibility record; written before and after the computation."""

    def __init__(self, path: Path, command: str, config: dict):
        self.path = path
        self.data = {
            "command": command,
            "config": config,
            "artifacts": [],
            "tool_version": __version__,
            "start": _now(),
            "end": None,
        }
        self.write()

    def add_artifact(self, p) -> None:
        self.data["artifacts"].append(str(p))

    def finish(self) -> None:
        self.data["end"] = _now()
        self.write()

    def write(self) -> None:
        with open(self.path, "w") as f:
            json.dump(self.data, f, indent=2)


def _config_snapshot(cfg: SmoothingConfig, alm: AlmConfig | None = None,
                     gen: GeneratorConfig | None = None) -> dict:
    out = {"smoothing": {"method": cfg.method.value, "delta": cfg.delta,
                         "epsilon": cfg.epsilon, "p_exp": cfg.p_exp,
                         "tau": cfg.tau}}
    if alm is not None:
        out["alm"] = {"rho0": alm.rho0, "gamma": alm.gamma, "theta": alm.theta,
                      "max_outer": alm.max_outer,
                      "inner_tol_start": alm.inner_tol_start,
                      "inner_tol_end": alm.inner_tol_end,
                      "inner_max_iters": alm.inner_max_iters,
                      "memory": alm.memory, "time_budget": alm.time_budget,
                      "target_violation": alm.target_violation}
    if gen is not None:
        out["generator"] = {"seed": gen.seed, "m_tasks": gen.m_tasks,
                            "n_stamps": gen.n_stamps}
    return out


def cmd_solve(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        inst = load_instance(args.instance)
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        print(f"error: cannot parse instance file {args.instance}: {exc}",
              file=sys.stderr)
        return EXIT_BAD_INPUT
    cfg = _smoothing_from_args(args)
    alm = _alm_from_args(args)
    manifest = Manifest(out_dir / "manifest.json", "solve",
                        _config_snapshot(cfg, alm))

    x0 = warm_start(inst)
    report = solve(inst, cfg, alm, x0)

    sol_path = out_dir / "solution.json"
    trace_path = out_dir / "trace.csv"
    save_solution(sol_path, inst, report.x_final.x, status=report.status.value)
    save_trace(trace_path, report.trace)
    manifest.add_artifact(sol_path)
    manifest.add_artifact(trace_path)
    manifest.finish()

    print(f"status={report.status.value} objective={report.objective:.6f} "
          f"violation={report.breakdown.total:.3e}")
    return EXIT_OK if report.status is SolveStatus.CONVERGED else EXIT_NOT_CONVERGED


def _parse_seed_range(text: str) -> range:
    try:
        a, b = text.split("..")
        lo, hi = int(a), int(b)
    except ValueError as exc:
        raise ValueError(f"seed range must look like 1..20, got {text!r}") from exc
    if hi < lo:
        raise ValueError(f"empty seed range {text!r}")
    return range(lo, hi + 1)


def _benchmark_one(payload: dict) -> dict:
    """Worker: generate, warm start, solve, write trace. Top level for pickling."""
    seed = payload["seed"]
    gen = GeneratorConfig(seed=seed, m_tasks=payload["m_a"])
    inst = generate(gen)
    cfg = SmoothingConfig(
        method=SoftminMethod(payload["method"]), delta=payload["delta"],
        epsilon=payload["eps"], p_exp=payload["p_exp"], tau=payload["tau"])
    alm = AlmConfig(time_budget=payload["budget_s"],
                    max_outer=payload["max_outer"],
                    target_violation=payload["target_violation"])
    t0 = time.monotonic()
    report = solve(inst, cfg, alm, warm_start(inst))
    wall = time.monotonic() - t0
    trace_path = Path(payload["out"]) / f"trace_seed{seed}.csv"
    save_trace(trace_path, report.trace)
    return {
        "seed": seed,
        "objective": report.objective,
        "violation": report.breakdown.total,
        "wall_s": wall,
        "status": report.status.value,
        "trace": [(p.wall_s, p.objective, p.violation) for p in report.trace],
    }


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("RVOPT_THREADS")
    workers = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(workers, n_jobs))


def time_grid(budget: float, lo: float = 0.01, per_decade: int = 50) -> np.ndarray:
    """Log-spaced aggregation grid, per_decade points per decade from lo to budget."""
    if budget <= lo:
        return np.array([budget])
    decades = np.log10(budget / lo)
    n = max(2, int(round(per_decade * decades)) + 1)
    return np.logspace(np.log10(lo), np.log10(budget), n)


def resample_trace(trace: list[tuple], grid: np.ndarray) -> np.ndarray:
    """Step-resample (objective, violation) onto the grid: last point at or
    before each grid time; the initial point before the first."""
    ts = np.array([p[0] for p in trace])
    vals = np.array([[p[1], p[2]] for p in trace])
    idx = np.searchsorted(ts, grid, side="right") - 1
    idx = np.clip(idx, 0, len(trace) - 1)
    return vals[idx]


def cmd_benchmark(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        seeds = _parse_seed_range(args.seeds)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    cfg = _smoothing_from_args(args)
    alm = _alm_from_args(args)
    gen0 = GeneratorConfig(seed=seeds[0], m_tasks=args.m_a)
    manifest = Manifest(out_dir / "manifest.json", "benchmark",
                        {**_config_snapshot(cfg, alm, gen0),
                         "seeds": args.seeds})

    payloads = [{
        "seed": seed, "m_a": args.m_a, "method": args.method,
        "delta": args.delta, "eps": args.eps, "p_exp": args.p_exp,
        "tau": args.tau, "budget_s": args.budget_s,
        "max_outer": args.max_outer,
        "target_violation": args.target_violation, "out": str(out_dir),
    } for seed in seeds]

    rows = []
    failures = []
    workers = _worker_count(len(payloads))
    if workers == 1:
        results = map(_benchmark_one, payloads)
        for payload, result in zip(payloads, results):
            rows.append(result)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_benchmark_one, p): p["seed"] for p in payloads}
            for fut, seed in futures.items():
                try:
                    rows.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - record per-seed failure
                    failures.append({"seed": seed, "error": str(exc)})
    rows.sort(key=lambda r: r["seed"])

    agg_path = out_dir / "aggregate.csv"
    with open(agg_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["seed", "objective", "violation", "wall_s", "status"])
        for r in rows:
            writer.writerow([r["seed"], repr(r["objective"]), repr(r["violation"]),
                             repr(r["wall_s"]), r["status"]])
    manifest.add_artifact(agg_path)
    for r in rows:
        manifest.add_artifact(out_dir / f"trace_seed{r['seed']}.csv")

    budget = args.budget_s or max((r["trace"][-1][0] for r in rows), default=1.0)
    grid = time_grid(budget)
    resampled = np.stack([resample_trace(r["trace"], grid) for r in rows]) \
        if rows else np.zeros((0, len(grid), 2))
    q_path = out_dir / "quantiles.csv"
    with open(q_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "obj_q25", "obj_q50", "obj_q75",
                         "viol_q25", "viol_q50", "viol_q75"])
        for i, t in enumerate(grid):
            if rows:
                oq = np.quantile(resampled[:, i, 0], [0.25, 0.5, 0.75])
                vq = np.quantile(resampled[:, i, 1], [0.25, 0.5, 0.75])
            else:
                oq = vq = [np.nan] * 3
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in oq]
                            + [repr(float(v)) for v in vq])
    manifest.add_artifact(q_path)

    if failures:
        fail_path = out_dir / "failures.json"
        with open(fail_path, "w") as f:
            json.dump(failures, f, indent=2)
        manifest.add_artifact(fail_path)
    manifest.finish()

    done = len(rows)
    total = len(payloads)
    print(f"benchmark: {done}/{total} runs completed "
          f"({sum(1 for r in rows if r['status'] == 'Converged')} converged)")
    return EXIT_OK if done >= 0.9 * total else EXIT_NOT_CONVERGED


def cmd_oracle(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        inst = load_instance(args.instance)
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        print(f"error: cannot parse instance file {args.instance}: {exc}",
              file=sys.stderr)
        return EXIT_BAD_INPUT
    limits = OracleLimits(max_n=args.max_n, max_m_tasks=args.max_m_a)
    cfg = _smoothing_from_args(args)
    manifest = Manifest(out_dir / "manifest.json", "oracle",
                        _config_snapshot(cfg))
    try:
        exact = solve_exact(inst, limits)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    report_path = out_dir / "oracle_report.json"
    save_oracle_report(report_path, inst, exact)
    manifest.add_artifact(report_path)

    alm = AlmConfig()
    t0 = time.monotonic()
    nlp = solve(inst, cfg, alm, warm_start(inst))
    nlp_wall = time.monotonic() - t0

    cmp_path = out_dir / "comparison.csv"
    tr = Transcription(inst)
    with open(cmp_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "feasible", "objective", "violation", "wall_s"])
        writer.writerow(["oracle", exact.feasible,
                         repr(exact.objective) if exact.feasible else "",
                         repr(tr.violation_report(exact.x).total) if exact.feasible else "",
                         repr(exact.wall_s)])
        writer.writerow(["nlp", nlp.status is SolveStatus.CONVERGED,
                         repr(nlp.objective), repr(nlp.breakdown.total),
                         repr(nlp_wall)])
    manifest.add_artifact(cmp_path)
    manifest.finish()

    if exact.feasible:
        print(f"oracle optimum {exact.objective:.6f} "
              f"({exact.n_subproblems} subproblems, {exact.wall_s:.1f} s); "
              f"nlp {nlp.objective:.6f} [{nlp.status.value}]")
    else:
        print(f"oracle: infeasible ({exact.n_subproblems} subproblems); "
              f"nlp status {nlp.status.value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
