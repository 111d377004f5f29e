"""Penalty functionals on control amplitudes and coordinate changes.

Penalties act on a K x N amplitude array and return ``(value, gradient,
hessian)`` with the gradient and Hessian in the flattened slice-major order
used by :class:`newtongrape.grape.ControlSet`. They are subtracted from the
fidelity by the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

R_MIN = 1e-8
PENALTY_KINDS = ("norm_square", "spillout_square", "spillout_cube", "smoothing")


class SingularPointError(ValueError):
    pass


def _as_amplitudes(c) -> np.ndarray:
    c = getattr(c, "amplitudes", c)
    return np.atleast_2d(np.asarray(c, dtype=float))


def _flat(a: np.ndarray) -> np.ndarray:
    return a.T.ravel()


def norm_square(c):
    """Mean square amplitude, summed over channels."""
    a = _as_amplitudes(c)
    K, N = a.shape
    value = float((a ** 2).sum() / N)
    return value, _flat(2.0 * a / N), np.eye(K * N) * (2.0 / N)


def spillout(c, exponent: int = 2):
    """Penalize only the part of each amplitude beyond the unit bound."""
    if exponent not in (2, 3):
        raise ValueError("spillout exponent must be 2 or 3")
    a = _as_amplitudes(c)
    N = a.shape[1]
    excess = np.clip(np.abs(a) - 1.0, 0.0, None)
    sign = np.sign(a)
    value = float((excess ** exponent).sum() / N)
    grad = exponent * excess ** (exponent - 1) * sign / N
    if exponent == 2:
        curv = np.where(excess > 0, 2.0 / N, 0.0)
    else:
        curv = 6.0 * excess / N
    return value, _flat(grad), np.diag(_flat(curv))


def difference_operator(N: int, order: int = 1) -> np.ndarray:
    """Square N x N difference matrix.

    Order 1 is the forward difference with a zero last row; order 2 is the
    central second difference with zero first and last rows.
    """
    if N < 1:
        raise ValueError("need at least one slice")
    D = np.zeros((N, N))
    if order == 1:
        i = np.arange(N - 1)
        D[i, i] = -1.0
        D[i, i + 1] = 1.0
    elif order == 2:
        i = np.arange(1, N - 1)
        D[i, i - 1] = 1.0
        D[i, i] = -2.0
        D[i, i + 1] = 1.0
    else:
        raise ValueError("difference order must be 1 or 2")
    return D


def smoothing(c, delta: np.ndarray | None = None, order: int = 1):
    """Roughness ``(1/N) sum_k ||delta c_k||^2``."""
    a = _as_amplitudes(c)
    K, N = a.shape
    if delta is None:
        delta = difference_operator(N, order)
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 2 or delta.shape[1] != N:
        raise ValueError(f"difference operator has {delta.shape[-1]} columns, controls have {N} slices")
    diff = a @ delta.T
    value = float((diff ** 2).sum() / N)
    gram = delta.T @ delta
    grad = 2.0 / N * (a @ gram)
    return value, _flat(grad), np.kron(gram, np.eye(K)) * (2.0 / N)


@dataclass(frozen=True)
class PenaltySpec:
    kind: str
    weight: float = 1.0
    order: int = 1  # smoothing only

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if not self.weight >= 0:
            raise ValueError("penalty weight must be nonnegative")
        if self.order not in (1, 2):
            raise ValueError("smoothing order must be 1 or 2")

    def __call__(self, c):
        if self.kind == "norm_square":
            out = norm_square(c)
        elif self.kind == "spillout_square":
            out = spillout(c, 2)
        elif self.kind == "spillout_cube":
            out = spillout(c, 3)
        else:
            out = smoothing(c, order=self.order)
        return self.weight * out[0], self.weight * out[1], self.weight * out[2]


def total_penalty(specs, c, hessian: bool = True):
    """Weighted sum of penalties: ``(value, gradient, hessian or None)``."""
    a = _as_amplitudes(c)
    n = a.size
    value, grad = 0.0, np.zeros(n)
    hess = np.zeros((n, n)) if hessian else None
    for spec in specs:
        v, g, h = spec(a)
        value += v
        grad += g
        if hessian:
            hess += h
    return value, grad, hess


# --- polar coordinates ----------------------------------------------------------

def to_polar(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return np.hypot(x, y), np.arctan2(y, x)


def from_polar(r, phi):
    r, phi = np.asarray(r, dtype=float), np.asarray(phi, dtype=float)
    return r * np.cos(phi), r * np.sin(phi)


def _check_radius(r):
    if np.any(np.asarray(r) < R_MIN):
        raise SingularPointError(f"polar derivative transform needs r >= {R_MIN}")


def gradient_to_polar(x, y, gx, gy):
    """Cartesian gradient components to ``(d/dr, d/dphi)``."""
    r, phi = to_polar(x, y)
    _check_radius(r)
    return np.cos(phi) * gx + np.sin(phi) * gy, x * gy - y * gx


def gradient_from_polar(r, phi, gr, gphi):
    _check_radius(r)
    c, s = np.cos(phi), np.sin(phi)
    return c * gr - s / r * gphi, s * gr + c / r * gphi


def hessian_to_polar(x, y, gx, gy, hxx, hxy, hyy):
    """Same-point 2x2 Hessian block to ``(h_rr, h_rphi, h_phiphi)``."""
    r, phi = to_polar(x, y)
    _check_radius(r)
    c, s = np.cos(phi), np.sin(phi)
    hrr = c * c * hxx + 2 * c * s * hxy + s * s * hyy
    hrp = c * gy - s * gx + r * (c * s * (hyy - hxx) + (c * c - s * s) * hxy)
    hpp = -r * (c * gx + s * gy) + r * r * (s * s * hxx - 2 * c * s * hxy + c * c * hyy)
    return hrr, hrp, hpp


def hessian_from_polar(r, phi, gr, gphi, hrr, hrp, hpp):
    """Inverse of :func:`hessian_to_polar`; returns ``(h_xx, h_xy, h_yy)``."""
    _check_radius(r)
    c, s = np.cos(phi), np.sin(phi)
    # Jacobian of (r, phi) with respect to (x, y) and its derivatives
    rx, ry = c, s
    px, py = -s / r, c / r
    rxx, rxy, ryy = s * s / r, -c * s / r, c * c / r
    pxx, pxy, pyy = 2 * c * s / r ** 2, (s * s - c * c) / r ** 2, -2 * c * s / r ** 2
    hxx = rx * rx * hrr + 2 * rx * px * hrp + px * px * hpp + rxx * gr + pxx * gphi
    hxy = rx * ry * hrr + (rx * py + ry * px) * hrp + px * py * hpp + rxy * gr + pxy * gphi
    hyy = ry * ry * hrr + 2 * ry * py * hrp + py * py * hpp + ryy * gr + pyy * gphi
    return hxx, hxy, hyy


class PhaseMap:
    """Phase-only parameterization of paired (x, y) channels at fixed amplitudes.

    ``pairs`` lists ``(kx, ky)`` channel indices; the variables are one phase
    per pair and slice, flattened slice-major like the Cartesian controls.
    Channels not in a pair are held fixed.
    """

    def __init__(self, radii, pairs, K: int):
        self.radii = np.atleast_2d(np.asarray(radii, dtype=float))
        self.pairs = [tuple(p) for p in pairs]
        self.K = K
        self.N = self.radii.shape[1]
        if self.radii.shape[0] != len(self.pairs):
            raise ValueError("one amplitude row per channel pair is required")
        used = [k for p in self.pairs for k in p]
        if len(set(used)) != len(used) or any(not 0 <= k < K for k in used):
            raise ValueError("channel pairs must be distinct and in range")

    @property
    def size(self) -> int:
        return len(self.pairs) * self.N

    def amplitudes(self, phases, base=None) -> np.ndarray:
        """Cartesian K x N amplitudes; ``base`` supplies unpaired channels."""
        phi = np.asarray(phases, dtype=float).reshape(self.N, len(self.pairs)).T
        out = np.zeros((self.K, self.N)) if base is None else np.array(base, dtype=float)
        for p, (kx, ky) in enumerate(self.pairs):
            out[kx], out[ky] = from_polar(self.radii[p], phi[p])
        return out

    def phases(self, amplitudes) -> np.ndarray:
        a = np.asarray(amplitudes, dtype=float)
        phi = np.array([to_polar(a[kx], a[ky])[1] for kx, ky in self.pairs])
        return phi.T.ravel()

    def jacobian(self, amplitudes) -> np.ndarray:
        """d(Cartesian flat)/d(phase flat): dx/dphi = -y, dy/dphi = x."""
        a = np.asarray(amplitudes, dtype=float)
        P = len(self.pairs)
        J = np.zeros((self.K * self.N, P * self.N))
        for s in range(self.N):
            for p, (kx, ky) in enumerate(self.pairs):
                J[s * self.K + kx, s * P + p] = -a[ky, s]
                J[s * self.K + ky, s * P + p] = a[kx, s]
        return J

    def gradient(self, amplitudes, g) -> np.ndarray:
        return self.jacobian(amplitudes).T @ np.asarray(g)

    def hessian(self, amplitudes, g, H) -> np.ndarray:
        """Chain rule with the curvature term d2x/dphi2 = -x, d2y/dphi2 = -y."""
        a = np.asarray(amplitudes, dtype=float)
        J = self.jacobian(a)
        g = np.asarray(g)
        P = len(self.pairs)
        curv = np.zeros(P * self.N)
        for s in range(self.N):
            for p, (kx, ky) in enumerate(self.pairs):
                curv[s * P + p] = -(a[kx, s] * g[s * self.K + kx] + a[ky, s] * g[s * self.K + ky])
        return J.T @ H @ J + np.diag(curv)


# --- bound folding ----------------------------------------------------------------

def fold_bound(c):
    """Reflect any real value into [-1, 1]: continuous, period 4, identity on the interval."""
    c = np.asarray(c, dtype=float)
    return np.abs(c - 4.0 * np.floor((c - 1.0) / 4.0) - 3.0) - 1.0


def fold_bound_derivative(c):
    """Piecewise slope (+1 or -1) of :func:`fold_bound`."""
    c = np.asarray(c, dtype=float)
    inner = c - 4.0 * np.floor((c - 1.0) / 4.0) - 3.0
    return np.where(inner >= 0, 1.0, -1.0)
