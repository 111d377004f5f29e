"""Taylor matrix exponentials and propagator directional derivatives.

The exponential is a scaled-and-squared Taylor series that drops tiny
entries after every multiplication. Directional derivatives come from
exponentials of block upper-triangular auxiliary matrices,

    exp([[A, B], [0, A]])                =  [[P, D_B],  [0, P]]
    exp([[A, B, 0], [0, A, C], [0, 0, A]]) has (1,3) block  E_BC

where ``D_B`` is the first directional derivative of ``exp(A)`` along ``B``
and ``E_BC`` is half the ordered second derivative. The block structure is
exploited throughout: augmented matrices are never formed densely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MatexpError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ExpOptions:
    tol: float = 1e-14        # relative truncation of the Taylor series
    drop: float = 1e-14       # absolute drop threshold for tiny entries
    max_squarings: int = 64
    max_terms: int = 200

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.drop < 0:
            raise ValueError("drop must be nonnegative")


DEFAULT = ExpOptions()


def _norm1(a: np.ndarray) -> float:
    """Matrix 1-norm; for stacked arrays the largest over the stack."""
    if a.ndim == 1:
        return float(np.abs(a).sum())
    return float(np.abs(a).sum(axis=-2).max()) if a.size else 0.0


def _drop(a: np.ndarray, thr: float) -> np.ndarray:
    if thr > 0:
        a[np.abs(a) < thr] = 0.0
    return a


def _squarings(norm: float, opts: ExpOptions) -> int:
    if not np.isfinite(norm):
        raise MatexpError("non-finite entries in the generator")
    if norm <= 1.0:
        return 0
    m = int(np.ceil(np.log2(norm)))
    if m > opts.max_squarings:
        raise MatexpError(f"generator norm {norm:.3e} needs more than {opts.max_squarings} squarings")
    return m


def _check_square(a: np.ndarray, name: str = "A") -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MatexpError(f"{name} must be square, got shape {a.shape}")


def expm(a, opts: ExpOptions = DEFAULT) -> np.ndarray:
    """Exponential of a square matrix by scaled and squared Taylor series."""
    a = np.asarray(a, dtype=complex)
    _check_square(a)
    m = _squarings(_norm1(a), opts)
    a = a / 2.0 ** m
    result = np.eye(a.shape[0], dtype=complex)
    term = result.copy()
    for r in range(1, opts.max_terms + 1):
        term = _drop(term @ a / r, opts.drop)
        result += term
        if _norm1(term) <= opts.tol * _norm1(result):
            break
    else:
        raise MatexpError("Taylor series did not converge within the term cap")
    for _ in range(m):
        result = _drop(result @ result, opts.drop)
    return result


def expm_action(a, v, opts: ExpOptions = DEFAULT) -> np.ndarray:
    """``expm(a) @ v`` using only matrix-vector products.

    ``v`` may be a vector or a matrix of column vectors. The step is split
    into ``2**m`` substeps so that each has 1-norm at most one.
    """
    a = np.asarray(a, dtype=complex)
    _check_square(a)
    v = np.array(v, dtype=complex)
    if v.shape[0] != a.shape[0]:
        raise MatexpError(f"dimension mismatch: {a.shape} vs {v.shape}")
    steps = 2 ** _squarings(_norm1(a), opts)
    a = a / steps
    for _ in range(steps):
        v = _taylor_action(lambda x: a @ x, v, opts)
    return v


def _taylor_action(apply, v, opts):
    out = v.copy()
    term = v
    for r in range(1, opts.max_terms + 1):
        term = apply(term) / r
        out += term
        if np.abs(term).sum() <= opts.tol * np.abs(out).sum():
            return out
    raise MatexpError("Taylor series did not converge within the term cap")


# --- directional derivatives ------------------------------------------------

def expm_frechet_blocks(a, directions, pairs=(), opts: ExpOptions = DEFAULT):
    """Exponential with first and ordered second directional derivatives.

    Returns ``(P, D, E)`` where ``P = exp(a)``, ``D[k]`` is the derivative of
    ``exp(a)`` along ``directions[k]`` and ``E[p]`` is the (1,3) block of the
    exponential of ``[[a, B_k, 0], [0, a, B_j], [0, 0, a]]`` for
    ``pairs[p] = (k, j)``, i.e. half the ordered second derivative.

    Every auxiliary exponential shares the same Taylor recursion on the
    diagonal block, which is what makes recycling the first derivatives free.
    """
    a = np.asarray(a, dtype=complex)
    _check_square(a)
    n = a.shape[0]
    B = np.asarray(directions, dtype=complex).reshape(-1, n, n)
    pairs = [tuple(p) for p in pairs]
    K = B.shape[0]
    norm = _norm1(a) + (_norm1(B) if K else 0.0)
    m = _squarings(norm, opts)
    s = 2.0 ** m
    a = a / s
    B = B / s

    P = np.eye(n, dtype=complex)
    T = P.copy()
    D = np.zeros((K, n, n), dtype=complex)
    TD = np.zeros_like(D)
    E = np.zeros((len(pairs), n, n), dtype=complex)
    TE = np.zeros_like(E)
    ki = np.array([p[0] for p in pairs], dtype=int)
    ji = np.array([p[1] for p in pairs], dtype=int)
    for r in range(1, opts.max_terms + 1):
        # the new (1,3) terms need the previous (1,2) terms, so update in this order
        if pairs:
            TE = _drop((TD[ki] @ B[ji] + TE @ a) / r, opts.drop)
        if K:
            TD = _drop((T @ B + TD @ a) / r, opts.drop)
        T = _drop(T @ a / r, opts.drop)
        P += T
        D += TD
        E += TE
        size = _norm1(T) + (_norm1(TD) if K else 0.0) + (_norm1(TE) if pairs else 0.0)
        total = _norm1(P) + (_norm1(D) if K else 0.0) + (_norm1(E) if pairs else 0.0)
        if size <= opts.tol * total:
            break
    else:
        raise MatexpError("Taylor series did not converge within the term cap")

    for _ in range(m):
        if pairs:
            E = _drop(P @ E + E @ P + D[ki] @ D[ji], opts.drop)
        if K:
            D = _drop(P @ D + D @ P, opts.drop)
        P = _drop(P @ P, opts.drop)
    return P, D, E


def prop_derivative(H, Hk, dt: float, opts: ExpOptions = DEFAULT):
    """``P = exp(-i H dt)`` and its derivative along ``Hk``."""
    H, Hk = _same_dims(H, Hk)
    P, D, _ = expm_frechet_blocks(-1j * dt * H, [-1j * dt * Hk], opts=opts)
    return P, D[0]


def prop_second_derivative(H, Hk, Hj, dt: float, opts: ExpOptions = DEFAULT):
    """``(P, Dk, Dj, D2)`` from one 3x3 block exponential.

    ``D2`` is twice the (1,3) block. It equals the mixed second derivative
    of ``exp(-i(H + ck Hk + cj Hj) dt)`` when ``Hk`` and ``Hj`` commute;
    otherwise the mixed derivative is ``(D2(k,j) + D2(j,k)) / 2``.
    """
    H, Hk, Hj = _same_dims(H, Hk, Hj)
    P, D, E = expm_frechet_blocks(-1j * dt * H, [-1j * dt * Hk, -1j * dt * Hj],
                                  pairs=[(0, 1)], opts=opts)
    return P, D[0], D[1], 2.0 * E[0]


def _same_dims(*mats):
    mats = [np.asarray(x, dtype=complex) for x in mats]
    for x in mats:
        _check_square(x)
        if x.shape != mats[0].shape:
            raise MatexpError(f"dimension mismatch: {mats[0].shape} vs {x.shape}")
    return mats


@dataclass(frozen=True)
class AugmentedBlocks:
    """Block bidiagonal generator: ``A`` on the diagonal, ``B1`` (and ``B2``) above it.

    The exponent is ``t * [[A, B1, 0], [0, A, B2], [0, 0, A]]`` (or the 2x2
    version when ``B2`` is None).
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray | None = None
    t: complex = 1.0

    @property
    def nblocks(self) -> int:
        return 2 if self.B2 is None else 3


def aux_action(blocks: AugmentedBlocks, v, opts: ExpOptions = DEFAULT) -> np.ndarray:
    """Top slot of ``exp(t * L_aug) @ [0, ..., 0, v]``.

    For two blocks this is ``D v``; for three it is half the ordered second
    derivative applied to ``v``. Only block matrix-vector products are used.
    """
    A, B1 = _same_dims(blocks.A, blocks.B1)
    B2 = None if blocks.B2 is None else _same_dims(A, blocks.B2)[1]
    v = np.asarray(v, dtype=complex)
    if v.shape[0] != A.shape[0]:
        raise MatexpError(f"dimension mismatch: {A.shape} vs {v.shape}")
    t = blocks.t
    norm = abs(t) * (_norm1(A) + _norm1(B1) + (0.0 if B2 is None else _norm1(B2)))
    steps = 2 ** _squarings(norm, opts)
    h = t / steps
    A, B1 = h * A, h * B1
    B2 = None if B2 is None else h * B2

    if B2 is None:
        def apply(x):
            top, bot = x
            return (A @ top + B1 @ bot, A @ bot)
        state = (np.zeros_like(v), v)
    else:
        def apply(x):
            top, mid, bot = x
            return (A @ top + B1 @ mid, A @ mid + B2 @ bot, A @ bot)
        state = (np.zeros_like(v), np.zeros_like(v), v)

    for _ in range(steps):
        out = list(state)
        term = state
        for r in range(1, opts.max_terms + 1):
            term = tuple(x / r for x in apply(term))
            for i, x in enumerate(term):
                out[i] = out[i] + x
            if sum(np.abs(x).sum() for x in term) <= opts.tol * sum(np.abs(x).sum() for x in out):
                break
        else:
            raise MatexpError("Taylor series did not converge within the term cap")
        state = tuple(out)
    return state[0]
