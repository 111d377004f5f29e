"""Hessian regularization for Newton ascent.

Each routine takes the Hessian ``H`` of the objective being maximized and
works on ``M = -H`` so that a usable step needs ``M`` positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class RegularizationError(ArithmeticError):
    pass


def _sym(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("Hessian must be square")
    if not np.isfinite(H).all():
        raise RegularizationError("Hessian has non-finite entries")
    return 0.5 * (H + H.T)


def is_negative_definite(H) -> bool:
    """Cholesky test on ``-H``."""
    try:
        np.linalg.cholesky(-_sym(H))
        return True
    except np.linalg.LinAlgError:
        return False


def cholesky_regularize(H):
    """Shift ``H`` by ``-sigma I`` until ``-H`` admits a Cholesky factor.

    Returns ``(H_reg, sigma, iterations)``; ``iterations`` counts the shifted
    factorization attempts.
    """
    H = _sym(H)
    M = -H
    if is_negative_definite(H):
        return H, 0.0, 0
    fro = np.linalg.norm(M)
    if fro == 0:
        fro = 1.0
    dmin = float(np.diag(M).min())
    sigma = fro - dmin if dmin < 0 else fro
    n = len(H)
    it = 0
    while True:
        it += 1
        try:
            np.linalg.cholesky(M + sigma * np.eye(n))
            return H - sigma * np.eye(n), sigma, it
        except np.linalg.LinAlgError:
            sigma *= 2.0
            if sigma > 1e16 * fro:
                raise RegularizationError("Cholesky shift grew beyond 1e16 times the Hessian norm")


def trm_regularize(H, delta: float = 1.0):
    """Eigenvalue shift so every ascent curvature (eigenvalue of ``-H``) is at least ``delta``.

    Returns ``(H_reg, sigma)``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    H = _sym(H)
    lam_min = float(np.linalg.eigvalsh(-H)[0])
    sigma = max(0.0, delta - lam_min)
    return H - sigma * np.eye(len(H)), sigma


@dataclass
class RFOResult:
    direction: np.ndarray
    cond: float
    alpha: float
    iterations: int
    hessian: np.ndarray  # regularized objective Hessian (negative definite)
    shift: float


def _cond(lam, shift) -> float:
    lo, hi = lam[0] + shift, lam[-1] + shift
    return hi / lo if lo > 0 else np.inf


def rfo_regularize(H, g, zeta_max: float = 1e4, phi: float = 0.9) -> RFOResult:
    """Rational-function shift with iterative condition-number control.

    If ``-H`` is already positive definite with condition at most
    ``zeta_max`` the plain Newton direction is returned. Otherwise the
    gradient-bordered matrix ``[[a^2 M, a q], [a q^T, 0]]`` (``q = -g``) is
    shifted to positive semidefiniteness and ``M`` receives the matching
    shift ``sigma / a^2``; ``a`` is reduced by ``phi`` until the condition
    bound holds.
    """
    if not zeta_max > 1 or not 0 < phi < 1:
        raise ValueError("need zeta_max > 1 and 0 < phi < 1")
    H = _sym(H)
    g = np.asarray(g, dtype=float)
    M = -H
    lam, V = np.linalg.eigh(M)
    Vg = V.T @ g

    def result(shift, alpha, it):
        d = V @ (Vg / (lam + shift))
        return RFOResult(d, _cond(lam, shift), alpha, it, H - shift * np.eye(len(H)), shift)

    if lam[0] > 0 and _cond(lam, 0.0) <= zeta_max:
        return result(0.0, 1.0, 0)

    n = len(g)
    alpha = 1.0 / np.sqrt(abs(lam[0])) if abs(lam[0]) >= 1e-12 else 1.0
    aug = np.zeros((n + 1, n + 1))
    it = 0
    while True:
        aug[:n, :n] = alpha * alpha * M
        aug[:n, n] = aug[n, :n] = -alpha * g
        low = float(sla.eigh(aug, eigvals_only=True, subset_by_index=[0, 0])[0])
        shift = max(0.0, -low) / (alpha * alpha)
        if _cond(lam, shift) <= zeta_max:
            return result(shift, alpha, it)
        alpha *= phi
        it += 1
        if alpha < 1e-12:
            raise RegularizationError("conditioning scale underflowed before reaching the bound")
