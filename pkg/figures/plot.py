#!/usr/bin/env python3
"""Figure scripts for solver artifacts.

Three kinds, all reading only the CSV/JSON files the optimizer writes:

  convergence  one or more benchmark quantile CSVs -> two stacked log-y
               panels (objective, violation) with median lines and
               interquartile bars, one series per input file
  history      a solution JSON -> battery level over time with charging
               intervals shaded, plus the inter-vehicle distance panel
  scaling      a comparison CSV (m_a, method, time quantiles) -> log-y
               median solve time versus task count per method

Usage: plot.py --kind convergence|history|scaling --in PATHS [PATHS ...]
               --out FILE [--instance INSTANCE_JSON]

Images carry no timestamps, so identical inputs give identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

QUANTILE_COLUMNS = ["t", "obj_q25", "obj_q50", "obj_q75",
                    "viol_q25", "viol_q50", "viol_q75"]
SCALING_COLUMNS = ["m_a", "method", "time_q25", "time_q50", "time_q75"]


class InputError(Exception):
    pass


def _read_csv(path, required_columns):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise InputError(f"{path}: no data rows")
    missing = [c for c in required_columns if c not in rows[0]]
    if missing:
        raise InputError(f"{path}: missing columns {missing}; "
                         f"found {sorted(rows[0])}")
    return rows


def _save(fig, out_path):
    out_path = Path(out_path)
    metadata = {}
    if out_path.suffix == ".svg":
        metadata = {"Date": None}
    elif out_path.suffix == ".pdf":
        metadata = {"CreationDate": None}
    fig.savefig(out_path, dpi=150, metadata=metadata or None)
    plt.close(fig)


def plot_convergence(inputs, out_path, hook=None):
    """Median + interquartile convergence of objective and violation."""
    series = []
    for path in inputs:
        rows = _read_csv(path, QUANTILE_COLUMNS)
        data = {c: np.array([float(r[c]) for r in rows])
                for c in QUANTILE_COLUMNS}
        series.append((Path(path).stem, data))
    if hook is not None:
        hook({"kind": "convergence", "series": series})

    fig, (ax_obj, ax_viol) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    for name, d in series:
        for ax, lo, mid, hi in ((ax_obj, "obj_q25", "obj_q50", "obj_q75"),
                                (ax_viol, "viol_q25", "viol_q50", "viol_q75")):
            line, = ax.plot(d["t"], d[mid], label=name)
            ax.errorbar(d["t"][::10], d[mid][::10],
                        yerr=[np.maximum(d[mid] - d[lo], 0.0)[::10],
                              np.maximum(d[hi] - d[mid], 0.0)[::10]],
                        fmt="none", ecolor=line.get_color(), alpha=0.5,
                        capsize=2)
    for ax, label in ((ax_obj, "objective (h)"), (ax_viol, "constraint violation")):
        ax.set_yscale("log")
        ax.set_ylabel(label)
        ax.grid(True, which="both", alpha=0.3)
    ax_viol.set_xlabel("time (s)")
    ax_obj.legend()
    fig.tight_layout()
    _save(fig, out_path)


def _battery_branches(stamps, kappa=1.5):
    """Exact branch violations per leg from the solution rows."""
    out = []
    for a, b in zip(stamps, stamps[1:]):
        s = a["s"]
        d_a = np.hypot(a["r_a"][0] - a["r_g"][0], a["r_a"][1] - a["r_g"][1])
        d_b = np.hypot(b["r_a"][0] - b["r_g"][0], b["r_a"][1] - b["r_g"][1])
        alpha = b["e"] - a["e"] - kappa * s
        beta = b["e"] - a["e"] + s
        charge = np.sqrt(max(alpha, 0.0) ** 2 + d_a ** 2 + d_b ** 2)
        out.append((charge, abs(beta)))
    return out


def plot_history(inputs, out_path, instance_path=None, kappa=1.5, hook=None):
    """Battery and inter-vehicle distance histories of one solution."""
    if len(inputs) != 1:
        raise InputError("history needs exactly one solution file")
    with open(inputs[0]) as f:
        sol = json.load(f)
    stamps = sol.get("stamps")
    if not stamps:
        raise InputError(f"{inputs[0]}: no stamps in solution file")
    for key in ("t", "e", "r_a", "r_g", "s"):
        if key not in stamps[0]:
            raise InputError(f"{inputs[0]}: stamp rows lack field {key!r}")

    t = np.array([st["t"] for st in stamps])
    e = np.array([st["e"] for st in stamps])
    dist = np.array([np.hypot(st["r_a"][0] - st["r_g"][0],
                              st["r_a"][1] - st["r_g"][1]) for st in stamps])
    branches = _battery_branches(stamps, kappa=kappa)
    charging = [charge <= beta for charge, beta in branches]

    task_marks = []
    if instance_path is not None:
        with open(instance_path) as f:
            inst = json.load(f)
        r_a = np.array([st["r_a"] for st in stamps])
        for task in inst.get("uav_tasks", []):
            k = int(np.argmin(np.linalg.norm(r_a - np.asarray(task), axis=1)))
            task_marks.append((t[k], e[k], dist[k]))

    if hook is not None:
        hook({"kind": "history", "t": t, "e": e, "dist": dist,
              "charging": charging, "task_marks": task_marks})

    fig, (ax_e, ax_d) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for k, flag in enumerate(charging):
        if flag:
            for ax in (ax_e, ax_d):
                ax.axvspan(t[k], t[k + 1], color="gray", alpha=0.25, lw=0)
    ax_e.plot(t, e, color="tab:blue", lw=2)
    ax_e.set_ylabel("remaining flight time (h)")
    ax_d.plot(t, dist, color="tab:orange", lw=2)
    ax_d.set_ylabel("UAV-UGV distance (km)")
    ax_d.set_xlabel("time (h)")
    if task_marks:
        marks = np.array(task_marks)
        ax_e.plot(marks[:, 0], marks[:, 1], "r*", ms=10)
        ax_d.plot(marks[:, 0], marks[:, 2], "r*", ms=10)
    for ax in (ax_e, ax_d):
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path)


def plot_scaling(inputs, out_path, hook=None):
    """Median solve time versus task count, one series per method."""
    if len(inputs) != 1:
        raise InputError("scaling needs exactly one comparison file")
    rows = _read_csv(inputs[0], SCALING_COLUMNS)
    methods = []
    for r in rows:
        if r["method"] not in methods:
            methods.append(r["method"])
    series = []
    for method in methods:
        sub = [r for r in rows if r["method"] == method]
        data = {
            "m_a": np.array([float(r["m_a"]) for r in sub]),
            "q25": np.array([float(r["time_q25"]) for r in sub]),
            "q50": np.array([float(r["time_q50"]) for r in sub]),
            "q75": np.array([float(r["time_q75"]) for r in sub]),
        }
        series.append((method, data))
    if hook is not None:
        hook({"kind": "scaling", "series": series})

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, d in series:
        line, = ax.plot(d["m_a"], d["q50"], marker="o", label=name)
        ax.errorbar(d["m_a"], d["q50"],
                    yerr=[np.maximum(d["q50"] - d["q25"], 0.0),
                          np.maximum(d["q75"] - d["q50"], 0.0)],
                    fmt="none", ecolor=line.get_color(), alpha=0.5, capsize=3)
    ax.set_yscale("log")
    ax.set_xlabel("task count")
    ax.set_ylabel("solve time (s)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", required=True,
                        choices=["convergence", "history", "scaling"])
    parser.add_argument("--in", dest="inputs", nargs="+", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--instance", default=None,
                        help="instance JSON for task markers (history only)")
    args = parser.parse_args(argv)
    try:
        if args.kind == "convergence":
            plot_convergence(args.inputs, args.out)
        elif args.kind == "history":
            plot_history(args.inputs, args.out, instance_path=args.instance)
        else:
            plot_scaling(args.inputs, args.out)
    except (InputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
