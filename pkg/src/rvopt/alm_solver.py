"""Powell-Hestenes-Rockafellar augmented Lagrangian outer loop.

Minimizes the objective subject to equality residuals h = 0 and inequality
residuals g <= 0, alternating L-BFGS minimization of the augmented Lagrangian
with first-order multiplier updates. The softmin-shaped disjunctive residuals
enter as inequalities relative to their smoothing floor: they cannot reach
zero at feasible points (the smoothed norms inside them bottom out at a small
positive value), so the solver drives them to the floor instead of chasing an
unattainable zero.

All traced violation numbers are the exact, unsmoothed metric.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .lbfgs import inner_minimize
from .model import DecisionVector, ProblemInstance, graph_positions
from .smoothing import SmoothingConfig
from .transcription import NU, Transcription, ViolationBreakdown


class SolveStatus(enum.Enum):
    CONVERGED = "Converged"
    TIME_BUDGET = "TimeBudget"
    MAX_OUTER = "MaxOuter"
    INNER_FAILURE = "InnerFailure"


@dataclass(frozen=True)
class AlmConfig:
    """Outer-loop hyperparameters.

    inner_tol_start/end define a geometric per-outer-iteration schedule of
    gradient-norm tolerances. target_violation of None means
    1e-6 plus a tiny allowance for the norm-regularizer floor of the
    disjunctive residuals.
    """

    rho0: float = 10.0
    gamma: float = 10.0
    theta: float = 0.25
    max_outer: int = 30
    inner_tol_start: float = 1e-2
    inner_tol_end: float = 1e-8
    inner_max_iters: int = 2000
    memory: int = 10
    time_budget: float | None = None
    target_violation: float | None = None
    rho_max: float = 1e12
    restore_feasibility: bool = True

    def __post_init__(self):
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if not (0 < self.theta < 1):
            raise ValueError("theta must lie in (0, 1)")
        if self.inner_tol_start < self.inner_tol_end:
            raise ValueError("inner tolerance schedule must be nonincreasing")

    def inner_tol(self, outer: int) -> float:
        """Geometric schedule from inner_tol_start down to inner_tol_end."""
        if self.max_outer <= 1:
            return self.inner_tol_end
        frac = (outer - 1) / (self.max_outer - 1)
        return float(self.inner_tol_start
                     * (self.inner_tol_end / self.inner_tol_start) ** frac)


class TracePoint(NamedTuple):
    wall_s: float
    objective: float
    violation: float
    rho: float
    outer: int
    inner_iters: int


@dataclass
class SolveReport:
    x_final: DecisionVector
    objective: float
    breakdown: ViolationBreakdown
    trace: list[TracePoint]
    status: SolveStatus
    multipliers_eq: np.ndarray = field(default=None, repr=False)
    multipliers_ineq: np.ndarray = field(default=None, repr=False)


class _NlpProblem(object):
    """Adapter: smooth equalities stay equalities; the inequality block is
    [smooth inequalities, implied charge-rate bounds, floored disjunctive
    residuals]."""

    def __init__(self, tr: Transcription):
        self.tr = tr
        self.floors = tr.disjunctive_floors()
        self.n_eq = tr.n_eq
        self.n_implied = tr.n - 1
        self.n_ineq = tr.n_ineq + self.n_implied + tr.n_disj

    def _split_w(self, w):
        n_sm = self.tr.n_ineq
        return w[:n_sm], w[n_sm:n_sm + self.n_implied], w[n_sm + self.n_implied:]

    def _gather(self, x, ev):
        return np.concatenate([ev.g, self.tr.implied_charge_residuals(x),
                               ev.d - self.floors])

    def value_and_grad(self, x, lam, mu, rho):
        ev = self.tr.evaluate(x)
        h = ev.h
        g = self._gather(x, ev)
        q = np.maximum(0.0, mu + rho * g)
        val = (ev.f + lam @ h + 0.5 * rho * (h @ h)
               + (q @ q - mu @ mu) / (2.0 * rho))
        q_sm, q_imp, q_dj = self._split_w(q)
        grad = ev.weighted_gradient(1.0, lam + rho * h, q_sm, q_dj)
        grad += self.tr.implied_charge_vjp(q_imp)
        return val, grad

    def residuals(self, x):
        ev = self.tr.evaluate(x)
        return ev.f, ev.h, self._gather(x, ev)

    def make_restoration(self, x_freeze):
        """Feasibility polish with the disjunct selection frozen at the
        incumbent: each task/arm visit pins its currently-nearest stamp, each
        battery leg keeps its currently-cheaper branch. All residuals are then
        smooth, so their squared sum drives the exact violation to the
        optimizer's floor instead of resting on the softmin bias."""
        tr = self.tr
        r, e, p, s = tr.layout.split(np.asarray(x_freeze, dtype=float))
        task_stamp = [int(np.argmin(np.linalg.norm(
            r - tr.inst.uav_tasks[i][None, :], axis=1)))
            for i in range(tr.m_tasks)]
        arm_stamp = [int(np.argmin(np.abs(p[:, j] - tr.p_max[j])))
                     for j in range(tr.m_arms)]
        from .model import graph_positions
        g_pos = graph_positions(tr.inst.graph, p)
        pr = tr.inst.params
        alpha = e[1:] - e[:-1] - pr.kappa * s
        beta = e[1:] - e[:-1] + s
        u1 = r[:-1] - g_pos[:-1]
        u2 = r[1:] - g_pos[1:]
        charge_viol = np.sqrt(np.maximum(alpha, 0.0) ** 2
                              + (u1 * u1).sum(axis=1) + (u2 * u2).sum(axis=1))
        use_charge = charge_viol < np.abs(beta)

        def fg(x):
            ev = tr.evaluate(x)
            h = ev.h
            q_sm = np.maximum(0.0, ev.g)
            q_imp = np.maximum(0.0, tr.implied_charge_residuals(x))
            val = 0.5 * (h @ h + q_sm @ q_sm + q_imp @ q_imp)
            grad = ev.weighted_gradient(0.0, h, q_sm, np.zeros(tr.n_disj))
            grad += tr.implied_charge_vjp(q_imp)
            gr, ge, gp, gs = tr.layout.split(grad)

            rr, ee, pp, ss = tr.layout.split(np.asarray(x, dtype=float))
            for i, k in enumerate(task_stamp):
                res = rr[k] - tr.inst.uav_tasks[i]
                val += 0.5 * (res @ res)
                gr[k] += res
            for j, k in enumerate(arm_stamp):
                res = pp[k, j] - tr.p_max[j]
                val += 0.5 * res * res
                gp[k, j] += res
            a = ee[1:] - ee[:-1] - pr.kappa * ss
            b = ee[1:] - ee[:-1] + ss
            # discharge legs: equality beta = 0
            wb = np.where(use_charge, 0.0, b)
            val += 0.5 * (wb @ wb)
            ge[1:] += wb
            ge[:-1] -= wb
            gs += wb
            # charge legs: rate hinge plus position matches
            wa = np.where(use_charge, np.maximum(0.0, a), 0.0)
            val += 0.5 * (wa @ wa)
            ge[1:] += wa
            ge[:-1] -= wa
            gs -= pr.kappa * wa
            wc = use_charge.astype(float)[:, None]
            v1 = wc * ev._u1
            v2 = wc * ev._u2
            val += 0.5 * float((v1 * ev._u1).sum() + (v2 * ev._u2).sum())
            gr[:-1] += v1
            gr[1:] += v2
            gp[:-1] -= np.einsum("kdj,kd->kj", ev.g_tan[:-1], v1)
            gp[1:] -= np.einsum("kdj,kd->kj", ev.g_tan[1:], v2)
            return val, grad

        return fg

    def exact_violation(self, x) -> float:
        return self.tr.violation_report(x).total


def default_target_violation(tr: Transcription) -> float:
    return 1e-6 + NU * tr.n_disj


def solve(inst: ProblemInstance, cfg: SmoothingConfig, alm: AlmConfig,
          x0: DecisionVector | np.ndarray) -> SolveReport:
    """Solve the smoothed trajectory optimization from the given start point."""
    tr = Transcription(inst, cfg)
    if isinstance(x0, DecisionVector):
        x0 = x0.x
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (tr.layout.size,):
        raise ValueError(
            f"start point has shape {x0.shape}, expected ({tr.layout.size},)")
    problem = _NlpProblem(tr)
    target = alm.target_violation
    if target is None:
        target = default_target_violation(tr)
    raw = _alm_loop(problem, x0, alm, target)
    x_final = DecisionVector(tr.layout, raw.x)
    return SolveReport(
        x_final=x_final,
        objective=tr.objective(raw.x),
        breakdown=tr.violation_report(raw.x),
        trace=raw.trace,
        status=raw.status,
        multipliers_eq=raw.lam,
        multipliers_ineq=raw.mu,
    )


@dataclass
class _RawResult:
    x: np.ndarray
    trace: list
    status: SolveStatus
    lam: np.ndarray
    mu: np.ndarray


def _alm_loop(problem, x0: np.ndarray, alm: AlmConfig, target: float) -> _RawResult:
    """Generic PHR loop over a problem adapter (shared with the exact oracle)."""
    t0 = time.monotonic()
    deadline = None if alm.time_budget is None else t0 + alm.time_budget

    lam = np.zeros(problem.n_eq)
    mu = np.zeros(problem.n_ineq)
    rho = alm.rho0
    x = x0.copy()

    f0, h0, g0 = problem.residuals(x)
    if not (np.isfinite(f0) and np.all(np.isfinite(h0)) and np.all(np.isfinite(g0))):
        return _RawResult(x, [], SolveStatus.INNER_FAILURE, lam, mu)

    trace: list[TracePoint] = []
    trace.append(TracePoint(_tick(t0, trace), f0, problem.exact_violation(x),
                            rho, 0, 0))
    status = SolveStatus.MAX_OUTER
    f_prev = f0
    # penalty growth compares successive post-minimization violations; the
    # start point (often feasible by construction) is not a fair reference
    viol = np.inf

    for outer in range(1, alm.max_outer + 1):
        tol = alm.inner_tol(outer)

        def fg(z, _lam=lam, _mu=mu, _rho=rho):
            return problem.value_and_grad(z, _lam, _mu, _rho)

        res = inner_minimize(fg, x, tol, alm.inner_max_iters,
                             memory=alm.memory, deadline=deadline)
        x = res.x
        f, h, g = problem.residuals(x)
        lam = lam + rho * h
        mu = np.maximum(0.0, mu + rho * g)
        viol_new = problem.exact_violation(x)
        trace.append(TracePoint(_tick(t0, trace), f, viol_new, rho, outer,
                                res.iterations))

        # feasible AND settled: a feasible warm start must not stop the
        # solve before the objective has stopped moving between outers
        settled = (outer >= 3
                   and abs(f - f_prev) <= 1e-6 * max(1.0, abs(f)))
        if viol_new <= target and settled:
            status = SolveStatus.CONVERGED
            break
        if deadline is not None and time.monotonic() >= deadline:
            status = SolveStatus.TIME_BUDGET
            break
        if viol_new > alm.theta * viol:
            rho = min(rho * alm.gamma, alm.rho_max)
        viol = viol_new
        f_prev = f

    if (alm.restore_feasibility and status is not SolveStatus.CONVERGED
            and trace and hasattr(problem, "make_restoration")):
        x, restored = _restore_feasibility(problem, x, alm, deadline)
        f, _, _ = problem.residuals(x)
        trace.append(TracePoint(_tick(t0, trace), f, restored,
                                rho, trace[-1].outer + 1, 0))
        if restored <= target:
            status = SolveStatus.CONVERGED

    return _RawResult(x, trace, status, lam, mu)


def _restore_feasibility(problem, x: np.ndarray, alm: AlmConfig, deadline):
    """Local polish onto the feasible set: minimize squared residuals with
    the disjunct selection frozen at the incumbent. The objective plays no
    part, so slack variables (battery levels in particular) move freely;
    positions change only microscopically when the remaining violation is
    small."""
    raw = problem.make_restoration(x)
    v0, _ = raw(x)
    if v0 <= 0.0:
        return x, problem.exact_violation(x)
    scale = 1.0 / v0   # keep the stall test scale-invariant

    def fg(z):
        v, g = raw(z)
        return scale * v, scale * g

    res = inner_minimize(fg, x, 1e-14, alm.inner_max_iters,
                         memory=alm.memory, deadline=deadline)
    new_viol = problem.exact_violation(res.x)
    old_viol = problem.exact_violation(x)
    if new_viol < old_viol:
        return res.x, new_viol
    return x, old_viol


def _tick(t0: float, trace: list) -> float:
    t = time.monotonic() - t0
    if trace and t <= trace[-1].wall_s:
        t = trace[-1].wall_s + 1e-9
    return t


# ----- trace files -----------------------------------------------------------

TRACE_HEADER = "wall_s,objective_h,violation,rho,outer,inner_iters"


def save_trace(path, trace: list) -> None:
    with open(path, "w") as f:
        f.write(TRACE_HEADER + "\n")
        for pt in trace:
            f.write(f"{pt.wall_s!r},{pt.objective!r},{pt.violation!r},"
                    f"{pt.rho!r},{pt.outer},{pt.inner_iters}\n")


def load_trace(path) -> list:
    out = []
    with open(path) as f:
        header = f.readline().strip()
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header: {header}")
        for line in f:
            w, o, v, r, k, i = line.strip().split(",")
            out.append(TracePoint(float(w), float(o), float(v), float(r),
                                  int(k), int(i)))
    return out
