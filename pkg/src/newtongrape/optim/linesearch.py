"""Line searches for maximization.

Internally everything is phrased as minimizing ``phi(a) = -F(x + a d)`` so
the textbook inequalities can be used unchanged.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np


class LineSearchError(RuntimeError):
    pass


def _check_ascent(g, d) -> float:
    slope = float(np.dot(g, d))
    if not slope > 0:
        raise ValueError(f"direction is not an ascent direction (<g, d> = {slope:.3e})")
    return slope


def backtracking_search(fun: Callable, x, d, f0: float, g0, alpha0: float = 1.0,
                        beta: float = 0.5, c1: float = 1e-4, max_steps: int = 50):
    """Armijo backtracking. Returns ``(alpha, f(x + alpha d), evaluations)``.

    ``fun(x)`` returns the objective value only.
    """
    if not 0 < beta < 1 or not 0 < c1 < 1:
        raise ValueError("need 0 < beta < 1 and 0 < c1 < 1")
    slope = _check_ascent(g0, d)
    alpha = alpha0
    for j in range(max_steps + 1):
        f = fun(x + alpha * d)
        if np.isfinite(f) and f >= f0 + c1 * alpha * slope:
            return alpha, f, j + 1
        alpha *= beta
    raise LineSearchError(f"no sufficient increase after {max_steps} backtracking steps")


def _cubic_min(a, fa, da, b, fb, db, lo, hi):
    """Minimizer over [lo, hi] of the Hermite cubic through (a, fa, da), (b, fb, db).

    ``db`` may be None, in which case the quadratic through fa, da, fb is used.
    Returns NaN when the interpolant is degenerate.
    """
    if lo > hi:
        lo, hi = hi, lo
    h = b - a
    if h == 0 or not all(map(math.isfinite, (fa, da, fb))):
        return math.nan
    if db is None or not math.isfinite(db):
        # p(z) = fa + da h z + c z^2, z = (t - a) / h
        c2, c3 = fb - fa - da * h, 0.0
    else:
        c2 = 3 * (fb - fa) - (2 * da + db) * h
        c3 = (da + db) * h - 2 * (fb - fa)

    def p(t):
        z = (t - a) / h
        return fa + da * h * z + c2 * z * z + c3 * z ** 3

    cands = [lo, hi]
    # stationary points: da h + 2 c2 z + 3 c3 z^2 = 0
    if abs(c3) > 1e-300:
        disc = 4 * c2 * c2 - 12 * c3 * da * h
        if disc >= 0:
            sq = math.sqrt(disc)
            cands += [a + h * (-2 * c2 + sq) / (6 * c3), a + h * (-2 * c2 - sq) / (6 * c3)]
    elif abs(c2) > 1e-300:
        cands.append(a + h * (-da * h) / (2 * c2))
    cands = [t for t in cands if math.isfinite(t) and lo <= t <= hi]
    vals = [p(t) for t in cands]
    if not cands or not all(map(math.isfinite, vals)):
        return math.nan
    return cands[int(np.argmin(vals))]


def bracket_section_search(fun_grad: Callable, x, d, f0: float, g0, alpha0: float = 1.0,
                           c1: float = 1e-4, c2: float = 0.9, tau1: float = 3.0,
                           tau2: float = 0.1, tau3: float = 0.5, f_bound: float | None = None,
                           max_evals: int = 30):
    """Bracketing then sectioning with cubic interpolation, strong Wolfe exit.

    ``fun_grad(x)`` returns ``(F, gradF, payload)``; the payload of the
    accepted point is handed back so callers can reuse it. Returns
    ``(alpha, F, gradF, payload, evaluations)``. ``f_bound`` is an optional
    upper bound on ``F`` used to cap the bracket expansion.
    """
    if not 0 < c1 < c2 < 1:
        raise ValueError("need 0 < c1 < c2 < 1")
    slope = _check_ascent(g0, d)
    phi0, dphi0 = -f0, -slope
    mu = math.inf
    if f_bound is not None:
        mu = (-f_bound - phi0) / (c1 * dphi0)
    evals = 0
    cache = {}

    def probe(alpha):
        nonlocal evals
        if evals >= max_evals:
            raise LineSearchError(f"line search exceeded {max_evals} evaluations")
        evals += 1
        F, G, payload = fun_grad(x + alpha * d)
        phi = -F if np.isfinite(F) else math.inf
        dphi = -float(np.dot(G, d)) if np.isfinite(F) else math.nan
        cache[alpha] = (F, G, payload)
        return phi, dphi

    def armijo(alpha, phi):
        return phi <= phi0 + c1 * alpha * dphi0

    def accept(alpha):
        F, G, payload = cache[alpha]
        return alpha, F, G, payload, evals

    # bracketing
    prev, phi_prev, dphi_prev = 0.0, phi0, dphi0
    alpha = alpha0
    while True:
        phi, dphi = probe(alpha)
        if f_bound is not None and phi <= -f_bound:
            return accept(alpha)
        if not armijo(alpha, phi) or phi >= phi_prev:
            a, fa, da, b, fb, db = prev, phi_prev, dphi_prev, alpha, phi, dphi
            break
        if abs(dphi) <= -c2 * dphi0:
            return accept(alpha)
        if dphi >= 0:
            a, fa, da, b, fb, db = alpha, phi, dphi, prev, phi_prev, dphi_prev
            break
        if mu <= 2 * alpha - prev:
            nxt = mu
        else:
            lo, hi = 2 * alpha - prev, min(mu, alpha + tau1 * (alpha - prev))
            nxt = _cubic_min(prev, phi_prev, dphi_prev, alpha, phi, dphi, lo, hi)
            if not math.isfinite(nxt):
                nxt = hi
        prev, phi_prev, dphi_prev = alpha, phi, dphi
        alpha = nxt

    # sectioning; a always satisfies the sufficient decrease test
    while True:
        lo, hi = a + tau2 * (b - a), b - tau3 * (b - a)
        alpha = _cubic_min(a, fa, da, b, fb, db if math.isfinite(db) else None, lo, hi)
        if not math.isfinite(alpha):
            alpha = 0.5 * (a + b)
        if abs(b - a) * max(abs(da), 1e-300) < 1e-15 * max(1.0, abs(phi0)) and a > 0:
            return accept(a)
        try:
            phi, dphi = probe(alpha)
        except LineSearchError:
            if a > 0:
                return accept(a)
            raise
        if not armijo(alpha, phi) or phi >= fa:
            b, fb, db = alpha, phi, dphi
        else:
            if abs(dphi) <= -c2 * dphi0:
                return accept(alpha)
            if (b - a) * dphi >= 0:
                b, fb, db = a, fa, da
            a, fa, da = alpha, phi, dphi
