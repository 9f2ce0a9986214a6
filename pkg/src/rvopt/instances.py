"""Problem instance generation and the projection-based warm start.

The shipped fixture map resembles the three-arm road network used in the
reference experiments: ~5 km scale, curved arms meeting at a central
junction, distinct start and finish points on two different arms. Its exact
coordinates are approximate; only the figure of the original map is public.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (Arm, DecisionVector, PhysicalParams, ProblemInstance,
                    StarGraph, default_stamp_count, graph_position,
                    project_to_network)


def paper_default_params() -> PhysicalParams:
    """Default physical parameters of the reference experiments."""
    return PhysicalParams(v_max_a=36.0, v_max_g=16.2, kappa=1.5,
                          e_min=0.0, e_max=0.4, s_min=0.0, s_max=10.0)


_FIXTURE_ARMS = [
    # northwest arm: r0 sits partway up
    [[2.0, 2.0], [1.55, 2.65], [0.95, 3.2], [0.2, 3.6]],
    # south arm: rf sits partway down
    [[2.0, 2.0], [2.35, 1.15], [2.25, 0.3], [1.8, -0.45]],
    # east arm
    [[2.0, 2.0], [3.05, 2.25], [4.1, 2.15], [5.1, 1.75]],
]


def fixture_map() -> StarGraph:
    """The shipped three-arm map (cubic-smoothed polyline arms)."""
    return StarGraph([2.0, 2.0], [Arm.from_polyline(p) for p in _FIXTURE_ARMS])


def fixture_endpoints(graph: StarGraph) -> tuple[np.ndarray, np.ndarray]:
    """Start on the northwest arm, finish on the south arm (exactly on-network)."""
    r0 = graph.arms[0].point(0.62 * graph.arms[0].length)
    rf = graph.arms[1].point(0.55 * graph.arms[1].length)
    return np.asarray(r0), np.asarray(rf)


def network_bounding_box(graph: StarGraph, inflate: float = 0.2) -> np.ndarray:
    """[[xmin, ymin], [xmax, ymax]] of the network, inflated about its center."""
    pts = [graph.junction]
    for arm in graph.arms:
        pts.append(arm.point(np.linspace(0.0, arm.length, 256)))
    pts = np.vstack([np.atleast_2d(p) for p in pts])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * (1.0 + inflate)
    return np.array([center - half, center + half])


@dataclass(frozen=True)
class GeneratorConfig:
    """Seeded task sampling on the fixture map."""

    seed: int
    m_tasks: int
    box: np.ndarray | None = None   # [[xmin,ymin],[xmax,ymax]]; None -> inflated bbox
    n_stamps: int | None = None

    def __post_init__(self):
        if self.m_tasks < 0:
            raise ValueError("task count must be nonnegative")
        if self.box is not None:
            b = np.asarray(self.box, dtype=float)
            if b.shape != (2, 2) or np.any(b[1] <= b[0]):
                raise ValueError("box must be [[xmin,ymin],[xmax,ymax]] with positive area")


def generate(cfg: GeneratorConfig) -> ProblemInstance:
    """Instance with uniformly sampled task locations; bitwise deterministic in
    the seed (counter-based Philox streams, one per instance)."""
    graph = fixture_map()
    box = cfg.box if cfg.box is not None else network_bounding_box(graph)
    box = np.asarray(box, dtype=float)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(cfg.seed)))
    tasks = box[0] + rng.random((cfg.m_tasks, 2)) * (box[1] - box[0])
    r0, rf = fixture_endpoints(graph)
    n = cfg.n_stamps or default_stamp_count(cfg.m_tasks, graph.n_arms)
    return ProblemInstance(graph=graph, uav_tasks=tasks, r0=r0, rf=rf,
                           params=paper_default_params(), n_stamps=n)


# ----- warm start ------------------------------------------------------------

_ON_NETWORK_TOL = 1e-9


def _star_leg_length(a_arm, a_t, b_arm, b_t) -> float:
    if a_arm == b_arm:
        return abs(b_t - a_t)
    return a_t + b_t


def _star_interp(a_arm, a_t, b_arm, b_t, frac):
    """Point at the given fraction along the network path between two
    on-network points (through the junction when the arms differ)."""
    if a_arm == b_arm:
        return a_arm, a_t + frac * (b_t - a_t)
    total = a_t + b_t
    d = frac * total
    if d <= a_t:
        return a_arm, a_t - d
    return b_arm, d - a_t


def warm_start(inst: ProblemInstance) -> DecisionVector:
    """Initial decision vector from task projections onto the road network.

    Tasks are visited in greedy nearest-neighbor order; each contributes a
    rendezvous at its network projection, a detour to the task while the
    ground vehicle waits, and a return to the rendezvous. Between
    rendezvous the aerial vehicle rides the network with the ground vehicle
    (so those legs can charge); it leaves the network only on the task
    detours. Arm endpoints not already reached get a joint visit. The
    waypoint list is resampled onto exactly N stamps. Box constraints,
    complementarity and boundary equalities hold exactly at the result.
    """
    graph = inst.graph
    pr = inst.params

    proj0 = project_to_network(graph, inst.r0)
    projf = project_to_network(graph, inst.rf)

    order = _greedy_order(inst.r0, inst.uav_tasks)

    def build_waypoints(bracket: int):
        """bracket 2: rendezvous before and after each task detour;
        1: rendezvous before only; 0: bare task visits."""
        wps: list[tuple[np.ndarray | None, tuple[int, float]]] = []
        wps.append((None, (proj0.arm_index, proj0.arc_length)))
        for i in order:
            a = inst.uav_tasks[i]
            pj = project_to_network(graph, a)
            anchor = (pj.arm_index, pj.arc_length)
            if pj.distance <= _ON_NETWORK_TOL:
                # task sits on the road: the joint ride passes through it
                wps.append((None, anchor))
            else:
                if bracket >= 1:
                    wps.append((None, anchor))
                wps.append((np.asarray(a, dtype=float), anchor))
                if bracket >= 2:
                    wps.append((None, anchor))

        reached = np.zeros(graph.n_arms)
        for _, (j, t) in wps:
            reached[j] = max(reached[j], t)
        reached[projf.arm_index] = max(reached[projf.arm_index], projf.arc_length)
        for j, arm in enumerate(graph.arms):
            if reached[j] < arm.length - _ON_NETWORK_TOL:
                wps.append((None, (j, arm.length)))
        wps.append((None, (projf.arm_index, projf.arc_length)))

        # collapse consecutive repeats (tasks sharing a projection, on-road tasks)
        compact = [wps[0]]
        for wp in wps[1:]:
            prev = compact[-1]
            if prev[1] == wp[1] and prev[0] is None and wp[0] is None:
                continue
            compact.append(wp)
        return compact

    n = inst.n_stamps
    wps = build_waypoints(2)
    for bracket in (1, 0):
        if n >= len(wps):
            break
        wps = build_waypoints(bracket)
    if n < len(wps):
        raise ValueError(
            f"N={n} is too small for this warm start; need at least {len(wps)} stamps")
    if len(wps) == 1:   # start and finish coincide with nothing left to visit
        wps = wps * 2

    def uav_at(wp):
        pos, (j, t) = wp
        return _network_point(graph, j, t) if pos is None else pos

    # leg durations: rides move both vehicles along the network at ground
    # speed; detours fly the aerial vehicle while the ground vehicle waits
    legs = len(wps) - 1
    durations = np.empty(legs)
    for l in range(legs):
        (pa, (aa, ta)), (pb, (ab, tb)) = wps[l], wps[l + 1]
        if pa is None and pb is None:
            durations[l] = _star_leg_length(aa, ta, ab, tb) / pr.v_max_g
        else:
            durations[l] = np.linalg.norm(uav_at(wps[l + 1]) - uav_at(wps[l])) / pr.v_max_a

    # proportional extra stamps on the longest legs (largest remainder)
    extra = n - len(wps)
    if durations.sum() > 0:
        shares = durations / durations.sum() * extra
    else:
        shares = np.full(legs, extra / legs)
    counts = np.floor(shares).astype(int)
    order_idx = np.argsort(-(shares - counts), kind="stable")
    i = 0
    while counts.sum() < extra:
        counts[order_idx[i % legs]] += 1
        i += 1

    uav = np.empty((n, 2))
    arm_idx = np.empty(n, dtype=int)
    arc = np.empty(n)
    riding = np.empty(n, dtype=bool)   # stamp sits on the network with the ugv
    k = 0
    for l in range(legs):
        (pa, (aa, ta)), (pb, (ab, tb)) = wps[l], wps[l + 1]
        uav[k] = uav_at(wps[l])
        arm_idx[k], arc[k] = aa, ta
        riding[k] = pa is None
        k += 1
        ride_leg = pa is None and pb is None
        for m in range(1, counts[l] + 1):
            frac = m / (counts[l] + 1)
            if ride_leg:
                arm_idx[k], arc[k] = _star_interp(aa, ta, ab, tb, frac)
                uav[k] = _network_point(graph, arm_idx[k], arc[k])
                riding[k] = True
            else:
                # ground vehicle waits at the shared anchor during detours
                ua, ub = uav_at(wps[l]), uav_at(wps[l + 1])
                uav[k] = ua + frac * (ub - ua)
                arm_idx[k], arc[k] = aa, ta
                riding[k] = False
            k += 1
    uav[k] = uav_at(wps[-1])
    arm_idx[k], arc[k] = wps[-1][1]
    riding[k] = wps[-1][0] is None

    p = np.zeros((n, graph.n_arms))
    p[np.arange(n), arm_idx] = arc
    g_pos = np.stack([_network_point(graph, arm_idx[k], arc[k]) for k in range(n)])
    uav[riding] = g_pos[riding]
    uav[0] = inst.r0
    uav[-1] = inst.rf

    s = np.empty(n - 1)
    for k in range(n - 1):
        d_uav = np.linalg.norm(uav[k + 1] - uav[k])
        d_ugv = abs(p[k + 1] - p[k]).sum()
        s[k] = max(d_uav / pr.v_max_a, d_ugv / pr.v_max_g)
    s = np.clip(s, pr.s_min, pr.s_max)

    e = np.empty(n)
    e[0] = pr.e_max
    colocated = np.linalg.norm(uav - g_pos, axis=1) <= _ON_NETWORK_TOL
    for k in range(n - 1):
        if colocated[k] and colocated[k + 1]:
            e[k + 1] = min(e[k] + pr.kappa * s[k], pr.e_max)
        else:
            e[k + 1] = max(e[k] - s[k], pr.e_min)

    return DecisionVector.from_parts(inst.layout, uav, e, p, s)


def _network_point(graph: StarGraph, arm_index: int, t: float) -> np.ndarray:
    p = np.zeros(graph.n_arms)
    p[arm_index] = t
    return graph_position(graph, p)


def _greedy_order(start: np.ndarray, tasks: np.ndarray) -> list[int]:
    remaining = list(range(tasks.shape[0]))
    order = []
    pos = np.asarray(start, dtype=float)
    while remaining:
        dists = [np.linalg.norm(tasks[i] - pos) for i in remaining]
        j = remaining[int(np.argmin(dists))]
        remaining.remove(j)
        order.append(j)
        pos = tasks[j]
    return order
