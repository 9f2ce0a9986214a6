"""Assembly of the trajectory optimization problem.

Produces the objective, the smooth constraint group (boundary conditions,
speed limits, boxes, one-arm-at-a-time complementarity), the smoothed
disjunctive residuals (task visits, arm-endpoint visits, battery
charge-or-discharge), analytic gradients of any weighted combination, and the
exact unsmoothed violation metric used for all reported numbers.

Every norm and absolute value inside a constraint is regularized as
sqrt(.^2 + NU^2) so gradients are defined at zero; NU is far below every
tolerance of interest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .model import ProblemInstance, graph_positions, graph_tangents
from .smoothing import (SmoothingConfig, SoftminMethod, sigma_delta,
                        sigma_delta_grad, softmin_floor)

NU = 1e-9


@dataclass
class ResidualBundle:
    """Equality residuals (target 0), inequality residuals (target <= 0),
    and one provenance label per residual (equalities first)."""

    eq: np.ndarray
    ineq: np.ndarray
    labels: list[str]

    def __post_init__(self):
        if len(self.labels) != self.eq.size + self.ineq.size:
            raise ValueError("labels must cover every residual")

    @property
    def eq_labels(self) -> list[str]:
        return self.labels[: self.eq.size]

    @property
    def ineq_labels(self) -> list[str]:
        return self.labels[self.eq.size:]


@dataclass(frozen=True)
class ViolationBreakdown:
    """Exact constraint violation by group; total is their sum."""

    smooth_eq: float
    smooth_ineq: float
    task_visit: float
    arm_visit: float
    battery: float

    @property
    def total(self) -> float:
        return (self.smooth_eq + self.smooth_ineq + self.task_visit
                + self.arm_visit + self.battery)

    def as_dict(self) -> dict:
        return {
            "smooth_eq": self.smooth_eq,
            "smooth_ineq": self.smooth_ineq,
            "task_visit": self.task_visit,
            "arm_visit": self.arm_visit,
            "battery": self.battery,
            "total": self.total,
        }


def _hypot_nu(x: np.ndarray) -> np.ndarray:
    return np.sqrt(x * x + NU * NU)


def _row_norms_nu(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1) + NU * NU)


def _softmin_rows(c: np.ndarray, cfg: SmoothingConfig) -> np.ndarray:
    """Row-wise softmin of a 2-d member matrix (same formulas as smoothing)."""
    if cfg.method is SoftminMethod.LOG_SUM_EXP:
        m = c.min(axis=1)
        ex = np.exp(-cfg.tau * (c - m[:, None]))
        ex[np.arange(c.shape[0]), np.argmin(c, axis=1)] = 0.0
        return m - np.log1p(ex.sum(axis=1)) / cfg.tau
    u = np.log(c * c + cfg.epsilon ** 2)
    log_s = _logsumexp_rows(-cfg.p_exp * u) - math.log(c.shape[1])
    return np.exp(-log_s / (2.0 * cfg.p_exp)) - cfg.epsilon


def _softmin_rows_grad(c: np.ndarray, cfg: SmoothingConfig) -> np.ndarray:
    if cfg.method is SoftminMethod.LOG_SUM_EXP:
        w = np.exp(-cfg.tau * (c - c.min(axis=1)[:, None]))
        return w / w.sum(axis=1)[:, None]
    p = cfg.p_exp
    u = np.log(c * c + cfg.epsilon ** 2)
    log_s = _logsumexp_rows(-p * u) - math.log(c.shape[1])
    log_mag = ((-1.0 / (2.0 * p) - 1.0) * log_s)[:, None] - (p + 1.0) * u - math.log(c.shape[1])
    return np.exp(log_mag) * c


def _logsumexp_rows(v: np.ndarray) -> np.ndarray:
    m = v.max(axis=1)
    return m + np.log(np.exp(v - m[:, None]).sum(axis=1))


class Transcription(object):
    """Residuals, gradients and exact violations for one problem instance."""

    def __init__(self, inst: ProblemInstance, cfg: SmoothingConfig | None = None):
        self.inst = inst
        self.cfg = cfg if cfg is not None else SmoothingConfig()
        self.layout = inst.layout
        self.n = inst.n_stamps
        self.m_arms = inst.graph.n_arms
        self.m_tasks = inst.n_tasks
        self.p_max = inst.graph.arm_lengths
        self._labels_smooth = self._build_smooth_labels()
        self._labels_disj = self._build_disj_labels()

    # ----- labels ---------------------------------------------------------

    def _build_smooth_labels(self) -> list[str]:
        n = self.n
        labels = ["uav_start[0]", "uav_start[1]", "uav_end[0]", "uav_end[1]",
                  "ugv_start[0]", "ugv_start[1]", "ugv_end[0]", "ugv_end[1]",
                  "battery_full_start"]
        labels += [f"one_arm_at_a_time[k={k}]" for k in range(1, n + 1)]
        labels += [f"uav_speed[k={k}]" for k in range(1, n)]
        labels += [f"ugv_speed[k={k}]" for k in range(1, n)]
        labels += [f"e_lower[k={k}]" for k in range(2, n + 1)]
        labels += [f"e_upper[k={k}]" for k in range(2, n + 1)]
        labels += [f"s_lower[k={k}]" for k in range(1, n)]
        labels += [f"s_upper[k={k}]" for k in range(1, n)]
        labels += [f"p_lower[k={k},arm={j}]" for k in range(1, n + 1)
                   for j in range(self.m_arms)]
        labels += [f"p_upper[k={k},arm={j}]" for k in range(1, n + 1)
                   for j in range(self.m_arms)]
        return labels

    def _build_disj_labels(self) -> list[str]:
        labels = [f"task_visit[i={i}]" for i in range(self.m_tasks)]
        labels += [f"arm_visit[arm={j}]" for j in range(self.m_arms)]
        labels += [f"battery[k={k}]" for k in range(1, self.n)]
        return labels

    @property
    def n_eq(self) -> int:
        return 9 + self.n

    @property
    def n_ineq(self) -> int:
        n, m = self.n, self.m_arms
        return 2 * (n - 1) + 2 * (n - 1) + 2 * (n - 1) + 2 * n * m

    @property
    def n_disj(self) -> int:
        return self.m_tasks + self.m_arms + (self.n - 1)

    def disjunctive_floors(self) -> np.ndarray:
        """Per-constraint smallest attainable softmin value (smoothing bias)."""
        f_visit = softmin_floor(self.n, self.cfg, NU)
        f_batt = softmin_floor(2, self.cfg, NU)
        return np.concatenate([
            np.full(self.m_tasks + self.m_arms, f_visit),
            np.full(self.n - 1, f_batt),
        ])

    def implied_charge_residuals(self, x: np.ndarray) -> np.ndarray:
        """Valid inequalities implied by the battery disjunction:
        e_{k+1} - e_k - kappa*s_k <= 0 on every leg (the relaxed charging
        bound; pure discharge satisfies it with margin (1+kappa)*s_k).

        The charge branch measures its rate violation through the quadratic
        zone of the C1 hinge, which under-reports small overcharging; this
        linear form closes that gap for the solver without changing the
        feasible set.
        """
        _, e, _, s = self.layout.split(np.asarray(x, dtype=float))
        return e[1:] - e[:-1] - self.inst.params.kappa * s

    def implied_charge_vjp(self, w: np.ndarray) -> np.ndarray:
        grad = np.zeros(self.layout.size)
        _, ge, _, gs = self.layout.split(grad)
        ge[1:] += w
        ge[:-1] -= w
        gs -= self.inst.params.kappa * w
        return grad

    # ----- evaluation -----------------------------------------------------

    def evaluate(self, x: np.ndarray) -> "Evaluation":
        return Evaluation(self, np.asarray(x, dtype=float))

    def objective(self, x: np.ndarray) -> float:
        _, _, _, s = self.layout.split(np.asarray(x, dtype=float))
        return float(s.sum())

    def objective_gradient(self, x: np.ndarray) -> np.ndarray:
        grad = np.zeros(self.layout.size)
        self.layout.split(grad)[3][:] = 1.0
        return grad

    def smooth_residuals(self, x: np.ndarray) -> ResidualBundle:
        ev = self.evaluate(x)
        return ResidualBundle(eq=ev.h, ineq=ev.g, labels=self._labels_smooth)

    def disjunctive_residuals(self, x: np.ndarray) -> ResidualBundle:
        ev = self.evaluate(x)
        return ResidualBundle(eq=ev.d, ineq=np.zeros(0), labels=self._labels_disj)

    def full_gradient(self, x: np.ndarray, weights) -> np.ndarray:
        """Gradient of w_obj*objective + w_eq.h + w_ineq.g + w_disj.d."""
        w_obj, w_eq, w_ineq, w_disj = weights
        return self.evaluate(x).weighted_gradient(w_obj, w_eq, w_ineq, w_disj)

    # ----- exact violation ------------------------------------------------

    def violation_details(self, x: np.ndarray) -> dict:
        """Exact per-constraint violations (no smoothing anywhere)."""
        inst = self.inst
        r, e, p, s = self.layout.split(np.asarray(x, dtype=float))
        g_pos = graph_positions(inst.graph, p)
        pr = inst.params

        eq = np.concatenate([
            r[0] - inst.r0, r[-1] - inst.rf,
            g_pos[0] - inst.r0, g_pos[-1] - inst.rf,
            [e[0] - pr.e_max],
            p.sum(axis=1) ** 2 - (p * p).sum(axis=1),
        ])

        dr = np.linalg.norm(np.diff(r, axis=0), axis=1)
        dp = np.abs(np.diff(p, axis=0)).sum(axis=1)
        ineq = np.concatenate([
            dr - pr.v_max_a * s,
            dp - pr.v_max_g * s,
            pr.e_min - e[1:], e[1:] - pr.e_max,
            pr.s_min - s, s - pr.s_max,
            (-p).ravel(), (p - self.p_max[None, :]).ravel(),
        ])

        task = np.array([
            np.linalg.norm(r - inst.uav_tasks[i][None, :], axis=1).min()
            for i in range(self.m_tasks)
        ]) if self.m_tasks else np.zeros(0)
        arm = np.abs(p - self.p_max[None, :]).min(axis=0)

        alpha = e[1:] - e[:-1] - pr.kappa * s
        beta = e[1:] - e[:-1] + s
        u1 = r[:-1] - g_pos[:-1]
        u2 = r[1:] - g_pos[1:]
        charge = np.sqrt(np.maximum(alpha, 0.0) ** 2
                         + (u1 * u1).sum(axis=1) + (u2 * u2).sum(axis=1))
        battery = np.minimum(charge, np.abs(beta))

        return {"eq": eq, "ineq": ineq, "task": task, "arm": arm,
                "battery": battery}

    def violation_report(self, x: np.ndarray) -> ViolationBreakdown:
        d = self.violation_details(x)
        return ViolationBreakdown(
            smooth_eq=float(np.abs(d["eq"]).sum()),
            smooth_ineq=float(np.maximum(d["ineq"], 0.0).sum()),
            task_visit=float(d["task"].sum()),
            arm_visit=float(d["arm"].sum()),
            battery=float(d["battery"].sum()),
        )


class Evaluation(object):
    """One evaluation of all residual groups at a point, with a cached
    vector-jacobian product for weighted gradients."""

    def __init__(self, tr: Transcription, x: np.ndarray):
        self.tr = tr
        self.x = x
        inst = tr.inst
        pr = inst.params
        n = tr.n
        r, e, p, s = tr.layout.split(x)
        self.r, self.e, self.p, self.s = r, e, p, s

        self.g_pos = graph_positions(inst.graph, p)
        self.g_tan = graph_tangents(inst.graph, p)

        # objective
        self.f = float(s.sum())

        # smooth equalities
        row_sum = p.sum(axis=1)
        self.h = np.concatenate([
            r[0] - inst.r0, r[-1] - inst.rf,
            self.g_pos[0] - inst.r0, self.g_pos[-1] - inst.rf,
            [e[0] - pr.e_max],
            row_sum ** 2 - (p * p).sum(axis=1),
        ])
        self._row_sum = row_sum

        # smooth inequalities
        self.dr = r[1:] - r[:-1]
        self.dr_norm = _row_norms_nu(self.dr)
        self.dp = p[1:] - p[:-1]
        self.dp_h = _hypot_nu(self.dp)
        self.g = np.concatenate([
            self.dr_norm - pr.v_max_a * s,
            self.dp_h.sum(axis=1) - pr.v_max_g * s,
            pr.e_min - e[1:], e[1:] - pr.e_max,
            pr.s_min - s, s - pr.s_max,
            (-p).ravel(), (p - tr.p_max[None, :]).ravel(),
        ])

        # disjunctive members
        if tr.m_tasks:
            diff = r[None, :, :] - inst.uav_tasks[:, None, :]   # (mA, N, 2)
            self._task_diff = diff
            self._task_c = _row_norms_nu(diff)                   # (mA, N)
        else:
            self._task_c = np.zeros((0, n))
        self._arm_dev = p.T - tr.p_max[:, None]                  # (mG, N)
        self._arm_c = _hypot_nu(self._arm_dev)

        self._alpha = e[1:] - e[:-1] - pr.kappa * s
        self._sig = sigma_delta(self._alpha, tr.cfg.delta)
        self._sig_g = sigma_delta_grad(self._alpha, tr.cfg.delta)
        self._u1 = r[:-1] - self.g_pos[:-1]
        self._u2 = r[1:] - self.g_pos[1:]
        self._b1 = np.sqrt(self._sig ** 2 + (self._u1 ** 2).sum(axis=1)
                           + (self._u2 ** 2).sum(axis=1) + NU * NU)
        self._beta = e[1:] - e[:-1] + s
        self._b2 = _hypot_nu(self._beta)
        self._batt_c = np.stack([self._b1, self._b2], axis=1)    # (N-1, 2)

        cfg = tr.cfg
        self.d = np.concatenate([
            _softmin_rows(self._task_c, cfg) if tr.m_tasks else np.zeros(0),
            _softmin_rows(self._arm_c, cfg),
            _softmin_rows(self._batt_c, cfg),
        ])

    def weighted_gradient(self, w_obj: float, w_eq: np.ndarray,
                          w_ineq: np.ndarray, w_disj: np.ndarray) -> np.ndarray:
        tr = self.tr
        n, m = tr.n, tr.m_arms
        pr = tr.inst.params
        grad = np.zeros(tr.layout.size)
        gr, ge, gp, gs = tr.layout.split(grad)

        gs += w_obj

        # equalities
        w_eq = np.asarray(w_eq, dtype=float)
        gr[0] += w_eq[0:2]
        gr[-1] += w_eq[2:4]
        gp[0] += self.g_tan[0].T @ w_eq[4:6]
        gp[-1] += self.g_tan[-1].T @ w_eq[6:8]
        ge[0] += w_eq[8]
        w_c = w_eq[9:]
        gp += w_c[:, None] * (2.0 * self._row_sum[:, None] - 2.0 * self.p)

        # inequalities
        w_ineq = np.asarray(w_ineq, dtype=float)
        o = 0
        w1 = w_ineq[o:o + n - 1]; o += n - 1
        w2 = w_ineq[o:o + n - 1]; o += n - 1
        w_el = w_ineq[o:o + n - 1]; o += n - 1
        w_eu = w_ineq[o:o + n - 1]; o += n - 1
        w_sl = w_ineq[o:o + n - 1]; o += n - 1
        w_su = w_ineq[o:o + n - 1]; o += n - 1
        w_pl = w_ineq[o:o + n * m].reshape(n, m); o += n * m
        w_pu = w_ineq[o:o + n * m].reshape(n, m); o += n * m

        t1 = (w1 / self.dr_norm)[:, None] * self.dr
        gr[:-1] -= t1
        gr[1:] += t1
        gs -= pr.v_max_a * w1
        t2 = w2[:, None] * (self.dp / self.dp_h)
        gp[:-1] -= t2
        gp[1:] += t2
        gs -= pr.v_max_g * w2
        ge[1:] += w_eu - w_el
        gs += w_su - w_sl
        gp += w_pu - w_pl

        # disjunctive
        w_disj = np.asarray(w_disj, dtype=float)
        cfg = tr.cfg
        o = 0
        if tr.m_tasks:
            wt = w_disj[o:o + tr.m_tasks]; o += tr.m_tasks
            wm = _softmin_rows_grad(self._task_c, cfg) * wt[:, None]  # (mA, N)
            gr += np.einsum("ik,ikd->kd", wm / self._task_c, self._task_diff)
        wa = w_disj[o:o + m]; o += m
        wm = _softmin_rows_grad(self._arm_c, cfg) * wa[:, None]       # (mG, N)
        gp += (wm * self._arm_dev / self._arm_c).T
        wb = w_disj[o:]
        wmb = _softmin_rows_grad(self._batt_c, cfg) * wb[:, None]     # (N-1, 2)
        c1 = wmb[:, 0] / self._b1
        c2 = wmb[:, 1] * self._beta / self._b2
        ssg = c1 * self._sig * self._sig_g
        ge[1:] += ssg + c2
        ge[:-1] -= ssg + c2
        gs += -pr.kappa * ssg + c2
        gr[:-1] += c1[:, None] * self._u1
        gr[1:] += c1[:, None] * self._u2
        gp[:-1] -= np.einsum("kdj,kd->kj", self.g_tan[:-1], c1[:, None] * self._u1)
        gp[1:] -= np.einsum("kdj,kd->kj", self.g_tan[1:], c1[:, None] * self._u2)

        return grad


def objective(inst: ProblemInstance, x: np.ndarray) -> float:
    return Transcription(inst).objective(x)


def full_gradient(x: np.ndarray, inst: ProblemInstance, cfg: SmoothingConfig,
                  weights) -> np.ndarray:
    return Transcription(inst, cfg).full_gradient(x, weights)


def violation_report(x: np.ndarray, inst: ProblemInstance) -> ViolationBreakdown:
    return Transcription(inst).violation_report(x)


# ----- solution files -------------------------------------------------------

def solution_to_dict(inst: ProblemInstance, x: np.ndarray,
                     status: str | None = None) -> dict:
    tr = Transcription(inst)
    r, e, p, s = inst.layout.split(np.asarray(x, dtype=float))
    g_pos = graph_positions(inst.graph, p)
    t = np.concatenate([[0.0], np.cumsum(s)])
    stamps = []
    for k in range(inst.n_stamps):
        stamps.append({
            "k": k + 1,
            "t": float(t[k]),
            "r_a": r[k].tolist(),
            "r_g": g_pos[k].tolist(),
            "p": p[k].tolist(),
            "e": float(e[k]),
            "s": float(s[k]) if k < inst.n_stamps - 1 else None,
        })
    out = {
        "stamps": stamps,
        "objective": tr.objective(x),
        "violation": tr.violation_report(x).as_dict(),
    }
    if status is not None:
        out["status"] = status
    return out


def save_solution(path, inst: ProblemInstance, x: np.ndarray,
                  status: str | None = None) -> None:
    with open(path, "w") as f:
        json.dump(solution_to_dict(inst, x, status), f, indent=2)


def load_solution(path) -> dict:
    with open(path) as f:
        return json.load(f)
