"""Quasi-Newton curvature updates.

The formulas are the usual minimization ones: ``B`` approximates a positive
definite Hessian, ``s`` is the step and ``y`` the change in gradient. For
maximization the driver feeds ``y = -(g_new - g_old)`` and uses ``B^{-1} g``
as the ascent direction.
"""

from __future__ import annotations

from collections import deque

import numpy as np

SKIP_TOL = 1e-8


def _count_skip(stats):
    if stats is not None:
        stats["skipped"] = stats.get("skipped", 0) + 1


def sr1_update(B, s, y, stats: dict | None = None):
    """Symmetric rank-one update; skipped when the denominator nearly vanishes."""
    B = np.asarray(B, dtype=float)
    s, y = np.asarray(s, dtype=float), np.asarray(y, dtype=float)
    r = y - B @ s
    denom = float(r @ s)
    if abs(denom) <= SKIP_TOL * np.linalg.norm(s) * np.linalg.norm(r):
        _count_skip(stats)
        return B.copy()
    return B + np.outer(r, r) / denom


def _curvature_ok(s, y) -> bool:
    return float(s @ y) > 0


def broyden_update(B, s, y, phi: float = 1.0, stats: dict | None = None):
    """Broyden family on the Hessian: ``phi = 0`` is DFP, ``phi = 1`` is BFGS."""
    B = np.asarray(B, dtype=float)
    s, y = np.asarray(s, dtype=float), np.asarray(y, dtype=float)
    if not _curvature_ok(s, y):
        _count_skip(stats)
        return B.copy()
    rho = float(s @ y)
    Bs = B @ s
    bfgs = B - np.outer(Bs, Bs) / float(s @ Bs) + np.outer(y, y) / rho
    if phi == 1.0:
        return bfgs
    E = np.eye(len(s)) - np.outer(y, s) / rho
    dfp = E @ B @ E.T + np.outer(y, y) / rho
    return (1.0 - phi) * dfp + phi * bfgs


def inverse_broyden_update(Binv, s, y, phi: float = 1.0, stats: dict | None = None):
    """Same family on the inverse Hessian (``phi = 1`` inverse BFGS, ``phi = 0`` inverse DFP).

    For ``phi`` strictly between 0 and 1 this mixes the two inverse updates,
    which is not the exact inverse of :func:`broyden_update` with the same
    ``phi``.
    """
    H = np.asarray(Binv, dtype=float)
    s, y = np.asarray(s, dtype=float), np.asarray(y, dtype=float)
    if not _curvature_ok(s, y):
        _count_skip(stats)
        return H.copy()
    rho = float(s @ y)
    ss = np.outer(s, s) / rho
    out = np.zeros_like(H)
    if phi != 0.0:
        E = np.eye(len(s)) - np.outer(s, y) / rho
        out += phi * (E @ H @ E.T + ss)
    if phi != 1.0:
        Hy = H @ y
        out += (1.0 - phi) * (H - np.outer(Hy, Hy) / float(y @ Hy) + ss)
    return out


class LBFGSHistory:
    """Bounded store of curvature pairs; pairs failing ``<s, y> > 0`` are dropped."""

    def __init__(self, m: int = 20):
        if m < 1:
            raise ValueError("L-BFGS memory must be at least 1")
        self.m = m
        self.pairs: deque = deque(maxlen=m)
        self.skipped = 0

    def push(self, s, y) -> bool:
        s, y = np.asarray(s, dtype=float), np.asarray(y, dtype=float)
        if not _curvature_ok(s, y):
            self.skipped += 1
            return False
        self.pairs.append((s, y))
        return True

    def __len__(self):
        return len(self.pairs)


def lbfgs_direction(history, g, m: int | None = None, h0: float | None = None) -> np.ndarray:
    """Two-loop recursion: approximate ``B^{-1} g`` from the newest ``m`` pairs.

    The initial inverse is ``h0 * I``; by default ``h0 = s.y / y.y`` of the
    newest pair.
    """
    pairs = list(getattr(history, "pairs", history))
    if m is not None:
        pairs = pairs[-m:] if m > 0 else []
    q = np.array(g, dtype=float)
    if not pairs:
        return q
    alphas = []
    for s, y in reversed(pairs):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append((rho, a))
    if h0 is None:
        s, y = pairs[-1]
        h0 = float(s @ y) / float(y @ y)
    q *= h0
    for (s, y), (rho, a) in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q
