"""Big-M mixed-integer encoding of the disjunctions and an exact solver for
micro instances.

Each disjunction is gated by a binary: U picks the stamp that visits a task,
V the stamp that reaches an arm endpoint, W selects discharge (W=1 forces the
discharge equality; W=0 forces the charging branch's position match and
charge-rate bound). The exact solver enumerates complete assignments in
best-first order of a provable geometric lower bound and solves each
surviving continuous subproblem with the augmented Lagrangian; enumeration
stops once the next bound cannot beat the incumbent, so the result is the
exact optimum up to the subproblem solver's tolerance.

Enumeration is exponential by nature and gated to micro scale.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass

import numpy as np

from .alm_solver import AlmConfig, _alm_loop
from .model import ProblemInstance, project_to_network
from .transcription import ResidualBundle, Transcription

_PIN_TOL = 1e-9
_FEAS_TOL = 1e-6


@dataclass(frozen=True)
class Assignment:
    """Complete binary assignment: one stamp per task, one per arm endpoint,
    and a charge/discharge choice per leg (discharge[k] is W_k = 1)."""

    task_stamp: tuple
    arm_stamp: tuple
    discharge: tuple

    def matrices(self, n_stamps: int):
        u = np.zeros((n_stamps, len(self.task_stamp)), dtype=int)
        for i, k in enumerate(self.task_stamp):
            u[k, i] = 1
        v = np.zeros((n_stamps, len(self.arm_stamp)), dtype=int)
        for j, k in enumerate(self.arm_stamp):
            v[k, j] = 1
        w = np.asarray(self.discharge, dtype=int)
        return u, v, w

    @classmethod
    def from_matrices(cls, u, v, w) -> "Assignment":
        u = np.asarray(u, dtype=int)
        v = np.asarray(v, dtype=int)
        w = np.asarray(w, dtype=int)
        if u.size and not np.all(u.sum(axis=0) == 1):
            raise ValueError("each task needs exactly one assigned stamp")
        if v.size and not np.all(v.sum(axis=0) == 1):
            raise ValueError("each arm endpoint needs exactly one assigned stamp")
        task = tuple(int(np.argmax(u[:, i])) for i in range(u.shape[1])) if u.size else ()
        arm = tuple(int(np.argmax(v[:, j])) for j in range(v.shape[1])) if v.size else ()
        return cls(task, arm, tuple(bool(x) for x in w))


@dataclass(frozen=True)
class MinlpModel:
    """Instance plus the big-M constant used by every gate."""

    inst: ProblemInstance
    mu: float

    @classmethod
    def build(cls, inst: ProblemInstance, mu: float | None = None) -> "MinlpModel":
        if mu is None:
            mu = 10.0 * max(_instance_diameter(inst), _battery_span(inst))
        model = cls(inst=inst, mu=float(mu))
        if model.mu <= _instance_diameter(inst) or model.mu <= _battery_span(inst):
            raise ValueError(
                f"big-M constant {model.mu} does not dominate the instance scale")
        return model


def _instance_diameter(inst: ProblemInstance) -> float:
    pts = [inst.r0, inst.rf, inst.graph.junction]
    for arm in inst.graph.arms:
        pts.append(arm.point(arm.length))
    if inst.n_tasks:
        pts.extend(inst.uav_tasks)
    pts = np.vstack([np.atleast_2d(p) for p in pts])
    span = pts.max(axis=0) - pts.min(axis=0)
    return float(np.linalg.norm(span)) + float(inst.graph.arm_lengths.max())


def _battery_span(inst: ProblemInstance) -> float:
    pr = inst.params
    return pr.e_max + pr.kappa * pr.s_max * (inst.n_stamps - 1)


def bigM_labels(inst: ProblemInstance) -> list[str]:
    n, m_a, m_g = inst.n_stamps, inst.n_tasks, inst.graph.n_arms
    comps = ["+x", "-x", "+y", "-y"]
    labels = [f"task_gate[i={i},k={k},{c}]"
              for i in range(m_a) for k in range(1, n + 1) for c in comps]
    labels += [f"arm_gate[arm={j},k={k},{sgn}]"
               for j in range(m_g) for k in range(1, n + 1) for sgn in "+-"]
    labels += [f"discharge_gate[k={k},{sgn}]" for k in range(1, n) for sgn in "+-"]
    labels += [f"charge_rate_gate[k={k}]" for k in range(1, n)]
    labels += [f"position_gate[k={k},{c}]" for k in range(1, n)
               for c in ["k+x", "k-x", "k+y", "k-y", "k1+x", "k1-x", "k1+y", "k1-y"]]
    return labels


def bigM_residuals(x: np.ndarray, assign: Assignment, model: MinlpModel) -> ResidualBundle:
    """All gate inequalities (<= 0) with the binaries fixed; infinity norms are
    expanded into componentwise pairs."""
    inst = model.inst
    tr = Transcription(inst)
    ev = tr.evaluate(np.asarray(x, dtype=float))
    vals = _bigM_values(ev, assign, model)
    return ResidualBundle(eq=np.zeros(0), ineq=vals, labels=bigM_labels(inst))


def _assignment_arrays(inst, assign: Assignment, mu: float):
    n = inst.n_stamps
    u_slack = np.full((inst.n_tasks, n), mu)
    for i, k in enumerate(assign.task_stamp):
        u_slack[i, k] = 0.0
    v_slack = np.full((inst.graph.n_arms, n), mu)
    for j, k in enumerate(assign.arm_stamp):
        v_slack[j, k] = 0.0
    w = np.asarray(assign.discharge, dtype=bool)
    if w.shape != (n - 1,):
        raise ValueError(f"discharge pattern has length {w.size}, expected {n - 1}")
    dis_slack = np.where(w, 0.0, mu)        # mu*(1-W)
    chg_slack = np.where(w, mu, 0.0)        # mu*W
    return u_slack, v_slack, dis_slack, chg_slack


def _bigM_values(ev, assign: Assignment, model: MinlpModel) -> np.ndarray:
    inst = model.inst
    u_slack, v_slack, dis_slack, chg_slack = _assignment_arrays(inst, assign, model.mu)

    parts = []
    if inst.n_tasks:
        diff = ev._task_diff                                  # (mA, N, 2)
        gates = np.stack([diff[:, :, 0], -diff[:, :, 0],
                          diff[:, :, 1], -diff[:, :, 1]], axis=2)
        parts.append((gates - u_slack[:, :, None]).ravel())
    dev = ev._arm_dev                                         # (mG, N)
    parts.append(np.stack([dev, -dev], axis=2).ravel() -
                 np.repeat(v_slack.ravel(), 2))
    beta = ev._beta
    parts.append((np.stack([beta, -beta], axis=1)
                  - dis_slack[:, None]).ravel())
    parts.append(ev._alpha - chg_slack)
    u1, u2 = ev._u1, ev._u2
    pos = np.stack([u1[:, 0], -u1[:, 0], u1[:, 1], -u1[:, 1],
                    u2[:, 0], -u2[:, 0], u2[:, 1], -u2[:, 1]], axis=1)
    parts.append((pos - chg_slack[:, None]).ravel())
    return np.concatenate(parts)


def _bigM_vjp(ev, assign: Assignment, model: MinlpModel, w: np.ndarray) -> np.ndarray:
    """Gradient contribution of w . bigM_values."""
    inst = model.inst
    tr = ev.tr
    n, m_a, m_g = tr.n, tr.m_tasks, tr.m_arms
    grad = np.zeros(tr.layout.size)
    gr, ge, gp, gs = tr.layout.split(grad)
    pr = inst.params

    o = 0
    if m_a:
        wt = w[o:o + 4 * n * m_a].reshape(m_a, n, 4); o += 4 * n * m_a
        gr += np.einsum("ikc->kc", np.stack(
            [wt[:, :, 0] - wt[:, :, 1], wt[:, :, 2] - wt[:, :, 3]], axis=2))
    wa = w[o:o + 2 * n * m_g].reshape(m_g, n, 2); o += 2 * n * m_g
    gp += (wa[:, :, 0] - wa[:, :, 1]).T
    wd = w[o:o + 2 * (n - 1)].reshape(n - 1, 2); o += 2 * (n - 1)
    cb = wd[:, 0] - wd[:, 1]
    ge[1:] += cb
    ge[:-1] -= cb
    gs += cb
    wc = w[o:o + n - 1]; o += n - 1
    ge[1:] += wc
    ge[:-1] -= wc
    gs -= pr.kappa * wc
    wp = w[o:].reshape(n - 1, 8)
    cu1 = np.stack([wp[:, 0] - wp[:, 1], wp[:, 2] - wp[:, 3]], axis=1)
    cu2 = np.stack([wp[:, 4] - wp[:, 5], wp[:, 6] - wp[:, 7]], axis=1)
    gr[:-1] += cu1
    gr[1:] += cu2
    gp[:-1] -= np.einsum("kdj,kd->kj", ev.g_tan[:-1], cu1)
    gp[1:] -= np.einsum("kdj,kd->kj", ev.g_tan[1:], cu2)
    return grad


class _SubProblem(object):
    """ALM adapter for one fixed assignment: smooth group + big-M gates."""

    def __init__(self, tr: Transcription, assign: Assignment, model: MinlpModel):
        self.tr = tr
        self.assign = assign
        self.model = model
        self.n_eq = tr.n_eq
        n = tr.n
        self.n_bigm = 4 * n * tr.m_tasks + 2 * n * tr.m_arms + 11 * (n - 1)
        self.n_ineq = tr.n_ineq + self.n_bigm

    def _eval(self, x):
        ev = self.tr.evaluate(x)
        bm = _bigM_values(ev, self.assign, self.model)
        return ev, np.concatenate([ev.g, bm])

    def residuals(self, x):
        ev, g = self._eval(x)
        return ev.f, ev.h, g

    def value_and_grad(self, x, lam, mu, rho):
        ev, g = self._eval(x)
        h = ev.h
        q = np.maximum(0.0, mu + rho * g)
        val = (ev.f + lam @ h + 0.5 * rho * (h @ h)
               + (q @ q - mu @ mu) / (2.0 * rho))
        n_smooth = self.tr.n_ineq
        grad = ev.weighted_gradient(1.0, lam + rho * h, q[:n_smooth],
                                    np.zeros(self.tr.n_disj))
        grad += _bigM_vjp(ev, self.assign, self.model, q[n_smooth:])
        return val, grad

    def exact_violation(self, x) -> float:
        d = self.tr.violation_details(x)
        ev, g = self._eval(x)
        bm = g[self.tr.n_ineq:]
        return (float(np.abs(d["eq"]).sum())
                + float(np.maximum(d["ineq"], 0.0).sum())
                + float(np.maximum(bm, 0.0).sum()))


@dataclass
class ExactSolveResult:
    feasible: bool
    objective: float
    x: np.ndarray | None
    assignment: Assignment | None
    n_subproblems: int
    n_candidates: int
    wall_s: float


@dataclass(frozen=True)
class OracleLimits:
    max_n: int = 6
    max_m_tasks: int = 2
    max_m_arms: int = 2


_SUB_ALM = AlmConfig(rho0=10.0, gamma=10.0, theta=0.25, max_outer=14,
                     inner_tol_start=1e-2, inner_tol_end=1e-10,
                     inner_max_iters=500, memory=10)


def solve_exact(inst: ProblemInstance, limits: OracleLimits | None = None,
                n_starts: int = 3) -> ExactSolveResult:
    """Enumerate all gate assignments (best-first by a provable lower bound)
    and solve the surviving continuous subproblems; exact at micro scale."""
    limits = limits or OracleLimits()
    if inst.n_stamps > limits.max_n:
        raise ValueError(f"N={inst.n_stamps} exceeds the oracle limit {limits.max_n}")
    if inst.n_tasks > limits.max_m_tasks:
        raise ValueError(f"m_tasks={inst.n_tasks} exceeds the oracle limit "
                         f"{limits.max_m_tasks}")
    if inst.graph.n_arms > limits.max_m_arms:
        raise ValueError(f"m_arms={inst.graph.n_arms} exceeds the oracle limit "
                         f"{limits.max_m_arms}")

    t_start = time.monotonic()
    model = MinlpModel.build(inst)
    tr = Transcription(inst)
    combos = _enumerate_candidates(inst)
    combos.sort(key=lambda c: (c[0],) + tuple(c[1].discharge)
                + c[1].task_stamp + c[1].arm_stamp)

    # Any feasible trajectory whose total time fits in one battery span is
    # matched, at equal objective, by the same trajectory with a pure
    # discharge profile (e ramps down from e_max). Solving the all-discharge
    # patterns first therefore settles every instance whose optimum is within
    # the span; the exponentially larger mixed-pattern tier only runs when
    # charging is genuinely required.
    span = inst.params.e_max - inst.params.e_min
    tier1 = [c for c in combos if all(c[1].discharge)]
    tier2 = [c for c in combos if not all(c[1].discharge)]

    best_obj = np.inf
    best_x = None
    best_assign = None
    n_sub = 0

    def search(tier):
        nonlocal best_obj, best_x, best_assign, n_sub
        for bound, assign in tier:
            if bound >= best_obj - 1e-9:
                break
            sub = _SubProblem(tr, assign, model)
            n_sub += 1
            for start_idx in range(n_starts):
                x0 = _assignment_warm_start(inst, assign, start_idx)
                raw = _alm_loop(sub, x0, _SUB_ALM, target=1e-7)
                obj = tr.objective(raw.x)
                if sub.exact_violation(raw.x) <= _FEAS_TOL and obj < best_obj:
                    best_obj, best_x, best_assign = obj, raw.x, assign
                if best_obj <= bound + 1e-9:
                    break  # this combo already met its own lower bound

    search(tier1)
    if not best_obj <= span + 1e-12:
        search(tier2)

    return ExactSolveResult(
        feasible=best_x is not None,
        objective=float(best_obj),
        x=best_x,
        assignment=best_assign,
        n_subproblems=n_sub,
        n_candidates=len(combos),
        wall_s=time.monotonic() - t_start,
    )


def _enumerate_candidates(inst: ProblemInstance):
    """All assignments that survive exact feasibility pruning, with a valid
    lower bound on the mission time of each."""
    n = inst.n_stamps
    m_a, m_g = inst.n_tasks, inst.graph.n_arms
    pr = inst.params
    graph = inst.graph

    proj0 = project_to_network(graph, inst.r0)
    projf = project_to_network(graph, inst.rf)
    lengths = graph.arm_lengths
    task_net_dist = np.array([project_to_network(graph, a).distance
                              for a in inst.uav_tasks]) if m_a else np.zeros(0)
    ends = [arm.point(arm.length) for arm in graph.arms]

    def arm_stamp_ok(j, k):
        if k == 0:
            return np.linalg.norm(ends[j] - inst.r0) <= _PIN_TOL
        if k == n - 1:
            return np.linalg.norm(ends[j] - inst.rf) <= _PIN_TOL
        return True

    def task_stamp_ok(i, k):
        if k == 0:
            return np.linalg.norm(inst.uav_tasks[i] - inst.r0) <= _PIN_TOL
        if k == n - 1:
            return np.linalg.norm(inst.uav_tasks[i] - inst.rf) <= _PIN_TOL
        return True

    task_options = [[k for k in range(n) if task_stamp_ok(i, k)] for i in range(m_a)]
    arm_options = [[k for k in range(n) if arm_stamp_ok(j, k)] for j in range(m_g)]

    combos = []
    for w in itertools.product((True, False), repeat=n - 1):
        # stamps whose aerial position is forced onto the network by a charge leg
        matched = np.zeros(n, dtype=bool)
        for k in range(n - 1):
            if not w[k]:
                matched[k] = matched[k + 1] = True
        for task_stamps in itertools.product(*task_options) if m_a else [()]:
            ok = True
            for i, k in enumerate(task_stamps):
                if matched[k] and task_net_dist[i] > _PIN_TOL:
                    ok = False
                    break
                for i2 in range(i):
                    if task_stamps[i2] == k and np.linalg.norm(
                            inst.uav_tasks[i] - inst.uav_tasks[i2]) > _PIN_TOL:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            for arm_stamps in itertools.product(*arm_options) if m_g else [()]:
                if len(set(arm_stamps)) != len(arm_stamps):
                    continue
                assign = Assignment(task_stamps, arm_stamps, w)
                bound = _lower_bound(inst, assign, proj0, projf, lengths)
                if bound is None:
                    continue
                combos.append((bound, assign))
    return combos


def _lower_bound(inst, assign: Assignment, proj0, projf, lengths):
    """Provable lower bound of the subproblem optimum (None if infeasible).

    Time between consecutive pinned stamps is at least the pinned distance
    over the top speed, for each vehicle; a third bound sums, over disjoint
    spans between consecutive merged pins, the larger of the two vehicles'
    requirements. Stamp durations inside a maximal discharge run cannot
    exceed the battery span, so pinned travel there gives a feasibility cut.
    """
    n = inst.n_stamps
    pr = inst.params

    pins_uav = {0: np.asarray(inst.r0, dtype=float), n - 1: np.asarray(inst.rf, dtype=float)}
    for i, k in enumerate(assign.task_stamp):
        pins_uav[k] = inst.uav_tasks[i]
    pins_ugv = {0: (proj0.arm_index, proj0.arc_length),
                n - 1: (projf.arm_index, projf.arc_length)}
    for j, k in enumerate(assign.arm_stamp):
        pins_ugv[k] = (j, float(lengths[j]))

    def d_air(a, b):
        return float(np.linalg.norm(pins_uav[b] - pins_uav[a])) / pr.v_max_a

    def d_ground(a, b):
        (ja, ta), (jb, tb) = pins_ugv[a], pins_ugv[b]
        return (abs(tb - ta) if ja == jb else ta + tb) / pr.v_max_g

    ks = sorted(pins_uav)
    bound_uav = sum(d_air(a, b) for a, b in zip(ks, ks[1:]))
    ks_g = sorted(pins_ugv)
    bound_ugv = sum(d_ground(a, b) for a, b in zip(ks_g, ks_g[1:]))

    merged = sorted(set(pins_uav) | set(pins_ugv))
    bound_merged = 0.0
    for a, b in zip(merged, merged[1:]):
        t = 0.0
        if a in pins_uav and b in pins_uav:
            t = d_air(a, b)
        if a in pins_ugv and b in pins_ugv:
            t = max(t, d_ground(a, b))
        bound_merged += t

    # battery feasibility: durations inside a maximal discharge run sum to
    # e_start - e_end <= battery span, yet must cover the pinned travel there
    w = assign.discharge
    span = pr.e_max - pr.e_min
    k = 0
    while k < n - 1:
        if w[k]:
            k2 = k
            while k2 < n - 1 and w[k2]:
                k2 += 1
            run_t = sum(d_air(a, b) for a, b in zip(ks, ks[1:])
                        if a >= k and b <= k2)
            run_t = max(run_t, sum(d_ground(a, b) for a, b in zip(ks_g, ks_g[1:])
                                   if a >= k and b <= k2))
            if run_t > span + 1e-12:
                return None
            k = k2
        else:
            k += 1
    return max(bound_uav, bound_ugv, bound_merged)


def _assignment_warm_start(inst: ProblemInstance, assign: Assignment,
                           start_idx: int) -> np.ndarray:
    """Interpolate between the pinned stamps; perturb for multistarts."""
    n = inst.n_stamps
    pr = inst.params
    graph = inst.graph
    proj0 = project_to_network(graph, inst.r0)
    projf = project_to_network(graph, inst.rf)
    lengths = graph.arm_lengths

    pins_uav = {0: np.asarray(inst.r0, dtype=float), n - 1: np.asarray(inst.rf, dtype=float)}
    for i, k in enumerate(assign.task_stamp):
        pins_uav[k] = np.asarray(inst.uav_tasks[i], dtype=float)
    pins_ugv = {0: (proj0.arm_index, proj0.arc_length),
                n - 1: (projf.arm_index, projf.arc_length)}
    for j, k in enumerate(assign.arm_stamp):
        pins_ugv[k] = (j, float(lengths[j]))

    uav = np.empty((n, 2))
    ks = sorted(pins_uav)
    for a, b in zip(ks, ks[1:]):
        for k in range(a, b + 1):
            f = (k - a) / (b - a)
            uav[k] = (1 - f) * pins_uav[a] + f * pins_uav[b]

    p = np.zeros((n, graph.n_arms))
    ks_g = sorted(pins_ugv)
    for a, b in zip(ks_g, ks_g[1:]):
        (ja, ta), (jb, tb) = pins_ugv[a], pins_ugv[b]
        for k in range(a, b + 1):
            f = (k - a) / (b - a)
            if ja == jb:
                p[k, ja] = ta + f * (tb - ta)
            else:
                d = f * (ta + tb)
                if d <= ta:
                    p[k, ja] = ta - d
                else:
                    p[k, jb] = d - ta

    s = np.empty(n - 1)
    for k in range(n - 1):
        s[k] = max(np.linalg.norm(uav[k + 1] - uav[k]) / pr.v_max_a,
                   np.abs(p[k + 1] - p[k]).sum() / pr.v_max_g)
    s = np.clip(s, pr.s_min, pr.s_max)

    e = np.empty(n)
    e[0] = pr.e_max
    for k in range(n - 1):
        if assign.discharge[k]:
            e[k + 1] = max(e[k] - s[k], pr.e_min)
        else:
            e[k + 1] = min(e[k] + pr.kappa * s[k], pr.e_max)

    x = np.concatenate([uav.ravel(), e, p.ravel(), s])
    if start_idx > 0:
        rng = np.random.Generator(np.random.Philox(
            key=np.uint64(start_idx * 7919 + 13)))
        noise = rng.normal(0.0, 1e-2, x.size)
        x = x + noise
        layout = inst.layout
        _, ev, pv, sv = layout.split(x)
        np.clip(pv, 0.0, lengths[None, :], out=pv)
        np.clip(ev, pr.e_min, pr.e_max, out=ev)
        np.clip(sv, pr.s_min, pr.s_max, out=sv)
    return x


# ----- report files ----------------------------------------------------------

def save_oracle_report(path, inst: ProblemInstance, result: ExactSolveResult) -> None:
    report = {
        "feasible": result.feasible,
        "objective": result.objective if result.feasible else None,
        "subproblems": result.n_subproblems,
        "candidates": result.n_candidates,
        "wall_s": result.wall_s,
    }
    if result.assignment is not None:
        u, v, w = result.assignment.matrices(inst.n_stamps)
        report["assignment"] = {"U": u.tolist(), "V": v.tolist(), "W": w.tolist()}
    with open(path, "w") as f:
        json.dump(report, f, indent=2)
