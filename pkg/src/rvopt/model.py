"""Mission geometry and problem data.

The road network is a star graph: arc-length parameterized arms meeting at a
single junction. The ground vehicle's position is encoded by a nonnegative
vector ``p`` with one entry per arm; the map ``g`` turns ``p`` into a planar
position. Aerial positions, battery levels and stamp durations complete the
decision vector.

Units: km for lengths, hours for times and battery (remaining flight time).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

JUNCTION_TOL = 1e-9
UNIT_SPEED_TOL = 1e-6
ENDPOINT_ON_NETWORK_TOL = 1e-6


class Arm(object):
    """One arm of the road network: an arc-length parameterized planar curve.

    ``point(t)`` maps arc length t in [0, length] to a position; ``tangent(t)``
    is its unit derivative. Both accept scalars or 1-d arrays and extrapolate
    smoothly outside the nominal range (solvers evaluate slightly out of box
    during line searches).
    """

    def __init__(self, point_fn: Callable, tangent_fn: Callable, length: float,
                 descriptor: dict | None = None):
        if length <= 0:
            raise ValueError(f"arm length must be positive, got {length}")
        self._point = point_fn
        self._tangent = tangent_fn
        self.length = float(length)
        self.descriptor = descriptor

    def point(self, t):
        return np.asarray(self._point(np.asarray(t, dtype=float)), dtype=float)

    def tangent(self, t):
        return np.asarray(self._tangent(np.asarray(t, dtype=float)), dtype=float)

    @classmethod
    def straight(cls, start: Sequence[float], direction: Sequence[float], length: float) -> "Arm":
        start = np.asarray(start, dtype=float)
        direction = np.asarray(direction, dtype=float)
        nrm = np.linalg.norm(direction)
        if nrm == 0:
            raise ValueError("direction must be nonzero")
        d = direction / nrm

        def pt(t):
            ts = np.asarray(t, dtype=float)
            if ts.ndim == 0:
                return start + ts * d
            return start[None, :] + np.outer(ts, d)

        def tg(t):
            ts = np.asarray(t, dtype=float)
            if ts.ndim == 0:
                return d.copy()
            return np.broadcast_to(d, (ts.size, 2)).copy()

        desc = {"type": "straight", "direction": d.tolist(), "length": float(length)}
        return cls(pt, tg, length, descriptor=desc)

    @classmethod
    def from_polyline(cls, points: Sequence[Sequence[float]], samples_per_segment: int = 400) -> "Arm":
        """Smooth a sampled polyline into an arc-length parameterized curve.

        A cubic spline through the points (chord-length parameter) is
        reparameterized by arc length; the relative arc-length error of the
        reparameterization is well below 1e-4.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("polyline needs at least two planar points")
        chord = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(chord <= 0):
            raise ValueError("polyline points must be distinct")
        u = np.concatenate(([0.0], np.cumsum(chord)))
        spline = CubicSpline(u, pts, axis=0)
        dspline = spline.derivative()

        grid = np.unique(np.concatenate([
            np.linspace(u[i], u[i + 1], samples_per_segment, endpoint=False)
            for i in range(len(u) - 1)
        ] + [u[-1:]]))
        speed = np.linalg.norm(dspline(grid), axis=1)
        # Simpson on midpoints: arc length along the chord parameter
        mid = 0.5 * (grid[1:] + grid[:-1])
        speed_mid = np.linalg.norm(dspline(mid), axis=1)
        seg = (speed[:-1] + 4.0 * speed_mid + speed[1:]) * np.diff(grid) / 6.0
        arclen = np.concatenate(([0.0], np.cumsum(seg)))
        total = arclen[-1]
        u_of_s = CubicSpline(arclen, grid)

        def unit_tangent(uu):
            d = dspline(uu)
            n = np.linalg.norm(d, axis=-1, keepdims=True) if d.ndim > 1 \
                else np.linalg.norm(d)
            return d / n

        # solvers probe slightly outside [0, total] during line searches;
        # extend linearly so point and tangent stay exact derivative pairs
        p_lo, p_hi = spline(0.0), spline(u[-1])
        t_lo, t_hi = unit_tangent(0.0), unit_tangent(u[-1])

        def pt(t):
            ts = np.asarray(t, dtype=float)
            flat = np.atleast_1d(ts)
            out = spline(u_of_s(np.clip(flat, 0.0, total)))
            lo = flat < 0.0
            hi = flat > total
            if lo.any():
                out[lo] = p_lo[None, :] + flat[lo, None] * t_lo[None, :]
            if hi.any():
                out[hi] = p_hi[None, :] + (flat[hi, None] - total) * t_hi[None, :]
            return out[0] if ts.ndim == 0 else out

        def tg(t):
            ts = np.asarray(t, dtype=float)
            flat = np.atleast_1d(ts)
            out = unit_tangent(u_of_s(np.clip(flat, 0.0, total)))
            lo = flat < 0.0
            hi = flat > total
            if lo.any():
                out[lo] = t_lo[None, :]
            if hi.any():
                out[hi] = t_hi[None, :]
            return out[0] if ts.ndim == 0 else out

        desc = {"type": "polyline", "points": pts.tolist(), "length": float(total)}
        return cls(pt, tg, float(total), descriptor=desc)

    def closest(self, q: Sequence[float]) -> tuple[float, float]:
        """Arc length and distance of the point on this arm closest to q."""
        q = np.asarray(q, dtype=float)
        if self.descriptor is not None and self.descriptor.get("type") == "straight":
            start = self.point(0.0)
            d = np.asarray(self.descriptor["direction"], dtype=float)
            t = float(np.clip(np.dot(q - start, d), 0.0, self.length))
            return t, float(np.linalg.norm(self.point(t) - q))
        ts = np.linspace(0.0, self.length, 2049)
        d2 = np.sum((self.point(ts) - q[None, :]) ** 2, axis=1)
        i = int(np.argmin(d2))
        lo = ts[max(i - 1, 0)]
        hi = ts[min(i + 1, len(ts) - 1)]
        res = minimize_scalar(
            lambda t: float(np.sum((self.point(t) - q) ** 2)),
            bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-12},
        )
        t = float(np.clip(res.x, 0.0, self.length))
        best = min((float(np.sum((self.point(t) - q) ** 2)), t), (d2[i], ts[i]))
        return best[1], float(np.sqrt(best[0]))


class StarGraph(object):
    """Arms joined at a single junction point.

    Validates on construction that every arm starts at the junction and is
    arc-length parameterized (finite-difference unit-speed check at 100
    uniform samples).
    """

    def __init__(self, junction: Sequence[float], arms: Sequence[Arm]):
        self.junction = np.asarray(junction, dtype=float)
        if self.junction.shape != (2,):
            raise ValueError("junction must be a planar point")
        self.arms = list(arms)
        if len(self.arms) < 1:
            raise ValueError("a star graph needs at least one arm")
        for j, arm in enumerate(self.arms):
            p0 = arm.point(0.0)
            if np.linalg.norm(p0 - self.junction) > JUNCTION_TOL:
                raise ValueError(f"arm {j} does not start at the junction: {p0}")
            h = 1e-6
            ts = np.linspace(h, arm.length - h, 100)
            fd = (arm.point(ts + h) - arm.point(ts - h)) / (2 * h)
            speed = np.linalg.norm(fd, axis=1)
            if np.any(np.abs(speed - 1.0) > UNIT_SPEED_TOL):
                worst = float(np.abs(speed - 1.0).max())
                raise ValueError(f"arm {j} is not arc-length parameterized (|speed-1| up to {worst:.2e})")

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def arm_lengths(self) -> np.ndarray:
        return np.array([a.length for a in self.arms])


class ProjectionResult(NamedTuple):
    arm_index: int
    arc_length: float
    distance: float


def graph_position(graph: StarGraph, p: Sequence[float]) -> np.ndarray:
    """Planar position of the network point encoded by p.

    junction + sum_j (arm_j(p_j) - junction); with at most one positive entry
    this is the point at arc length p_j along arm j.
    """
    p = np.asarray(p, dtype=float)
    _check_p(graph, p)
    pos = graph.junction.copy()
    for j, arm in enumerate(graph.arms):
        pos += arm.point(p[j]) - graph.junction
    return pos


def graph_position_jacobian(graph: StarGraph, p: Sequence[float]) -> np.ndarray:
    """2 x m jacobian of :func:`graph_position`; column j is arm j's tangent at p_j."""
    p = np.asarray(p, dtype=float)
    _check_p(graph, p)
    return np.stack([arm.tangent(p[j]) for j, arm in enumerate(graph.arms)], axis=1)


def _check_p(graph: StarGraph, p: np.ndarray) -> None:
    if p.shape != (graph.n_arms,):
        raise ValueError(f"p has dimension {p.shape}, expected ({graph.n_arms},)")
    lengths = graph.arm_lengths
    if np.any(p < -1e-12) or np.any(p > lengths + 1e-12):
        raise ValueError(f"p outside the box [0, p_max]: {p}")


def graph_positions(graph: StarGraph, P: np.ndarray) -> np.ndarray:
    """Batch, unchecked g(p_k) for all rows of P (extrapolates out of box)."""
    P = np.asarray(P, dtype=float)
    pos = np.tile(graph.junction, (P.shape[0], 1))
    for j, arm in enumerate(graph.arms):
        pos += arm.point(P[:, j]) - graph.junction[None, :]
    return pos


def graph_tangents(graph: StarGraph, P: np.ndarray) -> np.ndarray:
    """Batch, unchecked jacobian columns: (K, 2, m) array of arm tangents."""
    P = np.asarray(P, dtype=float)
    return np.stack([arm.tangent(P[:, j]) for j, arm in enumerate(graph.arms)], axis=2)


def project_to_network(graph: StarGraph, q: Sequence[float]) -> ProjectionResult:
    """Closest network point to q; ties broken by lowest arm index, then lowest t."""
    if graph.n_arms == 0:
        raise ValueError("empty graph")
    q = np.asarray(q, dtype=float)
    best = None
    for j, arm in enumerate(graph.arms):
        t, dist = arm.closest(q)
        key = (dist, j, t)
        if best is None or key < best:
            best = key
    return ProjectionResult(arm_index=best[1], arc_length=best[2], distance=best[0])


def p_vector(graph: StarGraph, arm_index: int, t: float) -> np.ndarray:
    """The p encoding of the point at arc length t along one arm."""
    p = np.zeros(graph.n_arms)
    p[arm_index] = t
    return p


@dataclass(frozen=True)
class PhysicalParams:
    """Vehicle speeds, charge rate and box bounds on battery and durations."""

    v_max_a: float
    v_max_g: float
    kappa: float
    e_min: float
    e_max: float
    s_min: float
    s_max: float

    def __post_init__(self):
        if self.v_max_a <= 0 or self.v_max_g <= 0 or self.kappa <= 0:
            raise ValueError("speeds and charge rate must be positive")
        if not (0 <= self.e_min < self.e_max):
            raise ValueError(f"need 0 <= e_min < e_max, got [{self.e_min}, {self.e_max}]")
        if not (0 <= self.s_min < self.s_max):
            raise ValueError(f"need 0 <= s_min < s_max, got [{self.s_min}, {self.s_max}]")


@dataclass(frozen=True)
class VariableLayout:
    """Offsets of the flat decision vector: r_a (N,2), e (N,), p (N,m), s (N-1,)."""

    n_stamps: int
    n_arms: int

    @property
    def size(self) -> int:
        n, m = self.n_stamps, self.n_arms
        return 2 * n + n + n * m + (n - 1)

    def split(self, x: np.ndarray):
        """Views into x: (r_a, e, p, s). Mutating a view mutates x."""
        n, m = self.n_stamps, self.n_arms
        if x.shape != (self.size,):
            raise ValueError(f"flat vector has shape {x.shape}, expected ({self.size},)")
        r_a = x[: 2 * n].reshape(n, 2)
        e = x[2 * n: 3 * n]
        p = x[3 * n: 3 * n + n * m].reshape(n, m)
        s = x[3 * n + n * m:]
        return r_a, e, p, s


class DecisionVector(object):
    """Flat optimization variable with structured views.

    The views share memory with the flat vector, so the flat/structured
    round trip is exact by construction.
    """

    __slots__ = ("layout", "x")

    def __init__(self, layout: VariableLayout, x: np.ndarray | None = None):
        self.layout = layout
        if x is None:
            x = np.zeros(layout.size)
        x = np.asarray(x, dtype=float)
        if x.shape != (layout.size,):
            raise ValueError(f"flat vector has shape {x.shape}, expected ({layout.size},)")
        self.x = x

    @classmethod
    def from_parts(cls, layout: VariableLayout, r_a, e, p, s) -> "DecisionVector":
        dv = cls(layout)
        ra_v, e_v, p_v, s_v = layout.split(dv.x)
        ra_v[:] = r_a
        e_v[:] = e
        p_v[:] = p
        s_v[:] = s
        return dv

    @property
    def r_a(self) -> np.ndarray:
        return self.layout.split(self.x)[0]

    @property
    def e(self) -> np.ndarray:
        return self.layout.split(self.x)[1]

    @property
    def p(self) -> np.ndarray:
        return self.layout.split(self.x)[2]

    @property
    def s(self) -> np.ndarray:
        return self.layout.split(self.x)[3]

    def copy(self) -> "DecisionVector":
        return DecisionVector(self.layout, self.x.copy())


@dataclass(frozen=True)
class ProblemInstance:
    """Road network, task locations, endpoints, physical parameters, stamp count."""

    graph: StarGraph
    uav_tasks: np.ndarray
    r0: np.ndarray
    rf: np.ndarray
    params: PhysicalParams
    n_stamps: int

    def __post_init__(self):
        object.__setattr__(self, "uav_tasks", np.asarray(self.uav_tasks, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "r0", np.asarray(self.r0, dtype=float))
        object.__setattr__(self, "rf", np.asarray(self.rf, dtype=float))
        if self.n_stamps < 2:
            raise ValueError(f"need at least 2 stamps, got {self.n_stamps}")
        for name, pt in (("r0", self.r0), ("rf", self.rf)):
            proj = project_to_network(self.graph, pt)
            if proj.distance > ENDPOINT_ON_NETWORK_TOL:
                raise ValueError(
                    f"{name} must lie on the road network "
                    f"(distance {proj.distance:.3e} km to the nearest point)")

    @property
    def n_tasks(self) -> int:
        return self.uav_tasks.shape[0]

    @property
    def layout(self) -> VariableLayout:
        return VariableLayout(self.n_stamps, self.graph.n_arms)


def default_stamp_count(n_tasks: int, n_arms: int) -> int:
    """Stamp budget: one per task visit, arm endpoint and rendezvous, with slack."""
    return 3 * (n_tasks + n_arms) + 2


def _arm_from_dict(junction, d: dict) -> Arm:
    kind = d.get("type")
    if kind == "straight":
        return Arm.straight(junction, d["direction"], d["length"])
    if kind == "polyline":
        return Arm.from_polyline(d["points"])
    raise ValueError(f"unknown arm type {kind!r}")


def instance_to_dict(inst: ProblemInstance) -> dict:
    arms = []
    for arm in inst.graph.arms:
        if arm.descriptor is None:
            raise ValueError("arm built from raw callables cannot be serialized")
        arms.append(arm.descriptor)
    return {
        "junction": inst.graph.junction.tolist(),
        "arms": arms,
        "uav_tasks": inst.uav_tasks.tolist(),
        "r0": inst.r0.tolist(),
        "rf": inst.rf.tolist(),
        "params": {
            "v_max_A": inst.params.v_max_a,
            "v_max_G": inst.params.v_max_g,
            "kappa": inst.params.kappa,
            "e_min": inst.params.e_min,
            "e_max": inst.params.e_max,
            "s_min": inst.params.s_min,
            "s_max": inst.params.s_max,
        },
        "N": inst.n_stamps,
    }


def instance_from_dict(d: dict) -> ProblemInstance:
    junction = d["junction"]
    graph = StarGraph(junction, [_arm_from_dict(junction, a) for a in d["arms"]])
    pr = d["params"]
    params = PhysicalParams(
        v_max_a=pr["v_max_A"], v_max_g=pr["v_max_G"], kappa=pr["kappa"],
        e_min=pr["e_min"], e_max=pr["e_max"], s_min=pr["s_min"], s_max=pr["s_max"],
    )
    tasks = np.asarray(d.get("uav_tasks", []), dtype=float).reshape(-1, 2)
    n = d.get("N") or default_stamp_count(tasks.shape[0], graph.n_arms)
    return ProblemInstance(graph=graph, uav_tasks=tasks, r0=d["r0"], rf=d["rf"],
                           params=params, n_stamps=int(n))


def save_instance(inst: ProblemInstance, path) -> None:
    with open(path, "w") as f:
        json.dump(instance_to_dict(inst), f, indent=2)


def load_instance(path) -> ProblemInstance:
    with open(path) as f:
        return instance_from_dict(json.load(f))
