"""Limited-memory BFGS with a strong Wolfe line search.

First-order only: the augmented Lagrangian it minimizes contains hinge terms
whose second derivative jumps, so quasi-Newton with line search is the right
tool. Deterministic: no randomness, stable update order.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9
_MAX_LS_STEPS = 30
_ALPHA_MAX = 1e10


@dataclass
class InnerResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    grad_norm: float
    iterations: int
    n_evals: int
    converged: bool
    line_search_failed: bool
    stalled: bool = False

# relative objective decrease below which an iteration counts as stalled
# (same order as L-BFGS-B's default factr * eps)
FTOL_STALL = 2e-9
_STALL_PATIENCE = 2


def inner_minimize(f_and_grad, x0, tol: float, max_iters: int,
                   memory: int = 10, deadline: float | None = None) -> InnerResult:
    """Minimize a smooth function until the max-norm of its gradient <= tol.

    f_and_grad(x) must return (value, gradient). Returns the lowest-value
    iterate seen if the iteration budget runs out or the line search fails.
    An optional deadline (time.monotonic value) cuts the iteration short.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = f_and_grad(x)
    g = np.asarray(g, dtype=float)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("objective or gradient is not finite at the start point")

    n_evals = 1
    best_f, best_x, best_g = f, x.copy(), g.copy()
    hist: deque = deque(maxlen=memory)
    gamma = 1.0
    ls_failed = False
    stalled = False
    stall_count = 0
    it = 0

    while it < max_iters:
        gnorm = float(np.abs(g).max())
        if gnorm <= tol:
            return InnerResult(x, f, g, gnorm, it, n_evals, True, False)
        if deadline is not None and time.monotonic() >= deadline:
            break
        if stall_count >= _STALL_PATIENCE:
            # objective no longer moves at floating-point scale; more
            # iterations only polish a gradient this landscape will not yield
            stalled = True
            break

        d = -_two_loop(g, hist, gamma)
        dg = float(d @ g)
        if dg >= 0:
            # history gone stale; restart from steepest descent
            hist.clear()
            gamma = 1.0
            d = -g
            dg = float(d @ g)

        alpha0 = 1.0 if hist else min(1.0, 1.0 / max(1e-12, float(np.abs(g).sum())))
        step = _strong_wolfe(f_and_grad, x, f, g, d, dg, alpha0)
        n_evals += step.n_evals
        if step.alpha is None:
            if hist:
                hist.clear()
                gamma = 1.0
                d = -g
                dg = float(d @ g)
                step = _strong_wolfe(f_and_grad, x, f, g, d, dg,
                                     min(1.0, 1.0 / max(1e-12, float(np.abs(g).sum()))))
                n_evals += step.n_evals
            if step.alpha is None:
                ls_failed = True
                break

        s = step.alpha * d
        y = step.g - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            hist.append((s, y, 1.0 / sy))
            gamma = sy / float(y @ y)
        x = x + s
        if f - step.f <= FTOL_STALL * max(1.0, abs(f)):
            stall_count += 1
        else:
            stall_count = 0
        f, g = step.f, step.g
        it += 1
        if f < best_f:
            best_f, best_x, best_g = f, x.copy(), g.copy()

    if f <= best_f:
        best_f, best_x, best_g = f, x, g
    gnorm = float(np.abs(best_g).max())
    return InnerResult(best_x, best_f, best_g, gnorm, it, n_evals,
                       gnorm <= tol, ls_failed, stalled)


def _two_loop(g: np.ndarray, hist, gamma: float) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(hist):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    q *= gamma
    for (s, y, rho), a in zip(hist, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


@dataclass
class _Step:
    alpha: float | None
    f: float = np.nan
    g: np.ndarray = None
    n_evals: int = 0


def _strong_wolfe(fg, x, f0, g0, d, dphi0, alpha0,
                  c1: float = WOLFE_C1, c2: float = WOLFE_C2) -> _Step:
    """Line search enforcing f(x+ad) <= f0 + c1*a*f'(0) and |f'(a)| <= c2*|f'(0)|."""
    n_evals = 0

    def phi(alpha):
        nonlocal n_evals
        f, g = fg(x + alpha * d)
        n_evals += 1
        return f, np.asarray(g, dtype=float)

    alpha_prev, phi_prev, dphi_prev = 0.0, f0, dphi0
    alpha = alpha0
    for i in range(_MAX_LS_STEPS):
        f, g = phi(alpha)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            # stepped into a bad region; bisect back toward the good end
            res = _zoom(phi, f0, dphi0, alpha_prev, phi_prev, dphi_prev,
                        alpha, np.inf, np.nan, d, c1, c2)
            res.n_evals += n_evals
            return res
        dphi = float(g @ d)
        if f > f0 + c1 * alpha * dphi0 or (i > 0 and f >= phi_prev):
            res = _zoom(phi, f0, dphi0, alpha_prev, phi_prev, dphi_prev,
                        alpha, f, dphi, d, c1, c2)
            res.n_evals += n_evals
            return res
        if abs(dphi) <= -c2 * dphi0:
            return _Step(alpha, f, g, n_evals)
        if dphi >= 0:
            res = _zoom(phi, f0, dphi0, alpha, f, dphi,
                        alpha_prev, phi_prev, dphi_prev, d, c1, c2)
            res.n_evals += n_evals
            return res
        alpha_prev, phi_prev, dphi_prev = alpha, f, dphi
        alpha = min(2.0 * alpha, _ALPHA_MAX)
        if alpha >= _ALPHA_MAX:
            break
    return _Step(None, n_evals=n_evals)


def _zoom(phi, f0, dphi0, lo, f_lo, dphi_lo, hi, f_hi, dphi_hi, d, c1, c2) -> _Step:
    n_evals = 0
    for _ in range(_MAX_LS_STEPS):
        if np.isfinite(f_hi) and np.isfinite(dphi_lo):
            alpha = _cubic_min(lo, f_lo, dphi_lo, hi, f_hi, dphi_hi)
            span = abs(hi - lo)
            if (not np.isfinite(alpha)
                    or alpha <= min(lo, hi) + 0.1 * span
                    or alpha >= max(lo, hi) - 0.1 * span):
                alpha = 0.5 * (lo + hi)
        else:
            alpha = 0.5 * (lo + hi)
        f, g = phi(alpha)
        n_evals += 1
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            hi, f_hi, dphi_hi = alpha, np.inf, np.nan
        else:
            dphi = float(g @ d)
            if f > f0 + c1 * alpha * dphi0 or f >= f_lo:
                hi, f_hi, dphi_hi = alpha, f, dphi
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return _Step(alpha, f, g, n_evals)
                if dphi * (hi - lo) >= 0:
                    hi, f_hi, dphi_hi = lo, f_lo, dphi_lo
                lo, f_lo, dphi_lo = alpha, f, dphi
        if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
            break
    return _Step(None, n_evals=n_evals)


def _cubic_min(a, fa, dfa, b, fb, dfb):
    """Minimizer of the cubic through (a, fa, dfa), (b, fb, dfb)."""
    if not (np.isfinite(dfb) and np.isfinite(fb)):
        return np.nan
    d1 = dfa + dfb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - dfa * dfb
    if disc < 0:
        return np.nan
    d2 = np.sqrt(disc) * np.sign(b - a)
    denom = dfb - dfa + 2.0 * d2
    if denom == 0:
        return np.nan
    return b - (b - a) * (dfb + d2 - d1) / denom
