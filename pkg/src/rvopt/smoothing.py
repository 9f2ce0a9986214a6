"""Scalar smoothing primitives: the C1 hinge, log-sum-exp softmin and lp-norm softmin.

All three functions come with analytic first derivatives. The softmins are
evaluated in shifted / log-domain form so that large scale parameters or
extreme member values never overflow the raw formulas.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class SoftminMethod(enum.Enum):
    LP_NORM = "lp"
    LOG_SUM_EXP = "lse"


@dataclass(frozen=True)
class SmoothingConfig:
    """Parameters of the softmin approximations and the hinge knee.

    delta:   knee of the hinge (units of its argument).
    epsilon: regularizer of the lp softmin.
    p_exp:   lp exponent (integer >= 1).
    tau:     scale of the log-sum-exp softmin.
    """

    method: SoftminMethod = SoftminMethod.LP_NORM
    delta: float = 1.0
    epsilon: float = 1e-3
    p_exp: int = 3
    tau: float = 1e2

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.p_exp) != self.p_exp or self.p_exp < 1:
            raise ValueError(f"p_exp must be an integer >= 1, got {self.p_exp}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


def sigma_delta(alpha, delta: float):
    """C1 one-sided violation measure: 0, then quadratic, then linear.

    Zero for alpha <= 0, alpha^2/2 on [0, delta], delta*alpha - delta^2/2 above.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    a = np.asarray(alpha, dtype=float)
    out = np.where(
        a <= 0.0,
        0.0,
        np.where(a <= delta, 0.5 * a * a, delta * a - 0.5 * delta * delta),
    )
    return out if out.ndim else float(out)


def sigma_delta_grad(alpha, delta: float):
    """Derivative of :func:`sigma_delta`: clip(alpha, 0, delta)."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    a = np.asarray(alpha, dtype=float)
    out = np.clip(a, 0.0, delta)
    return out if out.ndim else float(out)


def _check_members(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("softmin needs a nonempty 1-d member vector")
    if not np.all(np.isfinite(c)):
        raise ValueError("softmin members must be finite")
    return c


def softmin_lse(c, tau: float) -> float:
    """Log-sum-exp softmin: -(1/tau) * ln(sum_k exp(-tau c_k)).

    Evaluated relative to min(c) so the exponentials never overflow.
    Always lies in [min(c) - ln(n)/tau, min(c)].
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    c = _check_members(c)
    i = int(np.argmin(c))
    m = c[i]
    # the min contributes exp(0) = 1 exactly; log1p keeps tiny tails alive
    z = float(np.exp(-tau * (np.delete(c, i) - m)).sum())
    return float(m - math.log1p(z) / tau)


def softmin_lse_grad(c, tau: float) -> np.ndarray:
    """Gradient of :func:`softmin_lse`: the softmax weights of -tau*c."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    c = _check_members(c)
    w = np.exp(-tau * (c - c.min()))
    return w / w.sum()


def softmin_lp(c, p_exp: int, epsilon: float) -> float:
    """lp-norm softmin: ((1/n) sum_k (c_k^2 + eps^2)^-p)^(-1/(2p)) - eps.

    The power sum is taken through logsumexp, so members near zero with a
    tiny epsilon cannot overflow (c^2+eps^2)^-p.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if int(p_exp) != p_exp or p_exp < 1:
        raise ValueError(f"p_exp must be an integer >= 1, got {p_exp}")
    c = _check_members(c)
    u = np.log(c * c + epsilon * epsilon)
    log_s = _logsumexp(-p_exp * u) - math.log(c.size)
    return float(math.exp(-log_s / (2.0 * p_exp)) - epsilon)


def softmin_lp_grad(c, p_exp: int, epsilon: float) -> np.ndarray:
    """Gradient of :func:`softmin_lp`, also computed in log-domain."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if int(p_exp) != p_exp or p_exp < 1:
        raise ValueError(f"p_exp must be an integer >= 1, got {p_exp}")
    c = _check_members(c)
    u = np.log(c * c + epsilon * epsilon)
    log_s = _logsumexp(-p_exp * u) - math.log(c.size)
    # d/dc_k = S^(-1/(2p)-1) * (1/n) * (c_k^2+eps^2)^(-p-1) * c_k
    log_mag = (-1.0 / (2.0 * p_exp) - 1.0) * log_s - (p_exp + 1.0) * u - math.log(c.size)
    return np.exp(log_mag) * c


def _logsumexp(v: np.ndarray) -> float:
    m = v.max()
    return float(m + math.log(np.exp(v - m).sum()))


def softmin(c, cfg: SmoothingConfig) -> float:
    if cfg.method is SoftminMethod.LOG_SUM_EXP:
        return softmin_lse(c, cfg.tau)
    return softmin_lp(c, cfg.p_exp, cfg.epsilon)


def softmin_grad(c, cfg: SmoothingConfig) -> np.ndarray:
    if cfg.method is SoftminMethod.LOG_SUM_EXP:
        return softmin_lse_grad(c, cfg.tau)
    return softmin_lp_grad(c, cfg.p_exp, cfg.epsilon)


def softmin_floor(n_members: int, cfg: SmoothingConfig, member_floor: float) -> float:
    """Smallest softmin value attainable when one member reaches its own floor.

    Smoothed norms inside the constraint members bottom out at a small
    positive value (the norm regularizer), so the softmin of a feasible
    disjunction cannot reach zero. Driving the softmin below this floor is
    therefore impossible and the solver must not try; constraints are posed
    as ``softmin <= floor`` instead of ``softmin = 0``.

    For log-sum-exp the softmin never exceeds its smallest member, so the
    floor is the member floor itself. For the lp form, one member at the
    floor with all others far away gives n^(1/(2p)) * hypot(floor, eps) - eps;
    any finite other member only lowers the value.
    """
    if n_members < 1:
        raise ValueError("softmin needs at least one member")
    if cfg.method is SoftminMethod.LOG_SUM_EXP:
        return member_floor
    return float(
        n_members ** (1.0 / (2.0 * cfg.p_exp)) * math.hypot(member_floor, cfg.epsilon)
        - cfg.epsilon
    )
