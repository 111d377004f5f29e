"""Fidelity, gradient and Hessian of piecewise-constant bilinear control problems.

Index conventions (zero-based slices ``s = 0 .. N-1``)::

    fwd[s + 1] = P_s fwd[s]           fwd[0] = rho0
    bwd[s]     = P_s^dagger bwd[s+1]  bwd[N] = sigma

so slice ``s`` consumes ``fwd[s]`` and its derivatives pair with
``bwd[s + 1]``. Controls are flattened slice-major, control-minor:
``x[s * K + k] = amplitudes[k, s]``. Derivatives are reported with respect
to the normalized amplitudes, i.e. already multiplied by the nominal power.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import matexp

FIDELITY_KINDS = ("J0", "J1", "J2")
COMMUTE_TOL = 1e-12
# Dense arrays gain nothing from dropping small entries, and the drop makes the
# fidelity slightly non-smooth, which finite-difference checks can see.
EXP_OPTS = matexp.ExpOptions(drop=0.0)


@dataclass
class ControlSet:
    """K x N normalized amplitudes with slice length ``dt`` and nominal ``power`` (rad/s)."""

    amplitudes: np.ndarray
    dt: float
    power: float

    def __post_init__(self):
        self.amplitudes = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        if self.amplitudes.size == 0:
            raise ValueError("need at least one control and one slice")
        if not self.dt > 0 or not self.power > 0:
            raise ValueError("dt and power must be positive")

    @property
    def K(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def N(self) -> int:
        return self.amplitudes.shape[1]

    def flatten(self) -> np.ndarray:
        return self.amplitudes.T.ravel().copy()

    def with_vector(self, x) -> "ControlSet":
        x = np.asarray(x, dtype=float)
        return ControlSet(x.reshape(self.N, self.K).T.copy(), self.dt, self.power)

    @classmethod
    def unflatten(cls, x, K: int, N: int, dt: float, power: float) -> "ControlSet":
        return cls(np.asarray(x, dtype=float).reshape(N, K).T.copy(), dt, power)


@dataclass(frozen=True)
class ClosedSystem:
    """Hilbert-space Hamiltonians behind a relaxation-free Liouville problem.

    When present, slice propagators factor as ``conj(U) kron U`` and all
    block exponentials run on the much smaller Hilbert-space matrices.
    """

    drift: np.ndarray
    controls: np.ndarray

    def liouville(self):
        return (_comm(self.drift), np.array([_comm(h) for h in self.controls]))


def _comm(h):
    d = h.shape[0]
    eye = np.eye(d)
    return np.kron(eye, h) - np.kron(h.T, eye)


@dataclass
class ControlProblem:
    """Drift generator, control generators and the state pairs to map.

    ``drift`` must already contain the relaxation term (see
    :func:`newtongrape.spinop.liouvillian`). More than one state pair turns
    the fidelity into the average over pairs. ``closed`` optionally carries
    the Hilbert-space Hamiltonians of a relaxation-free problem; it must
    reproduce ``drift`` and ``controls`` exactly as commutation superoperators.
    """

    drift: np.ndarray
    controls: Sequence[np.ndarray]
    initial: Sequence[np.ndarray]
    targets: Sequence[np.ndarray]
    kind: str = "J1"
    commutes: np.ndarray | None = None
    closed: ClosedSystem | None = None

    def __post_init__(self):
        self.drift = np.asarray(self.drift, dtype=complex)
        self.controls = np.asarray([np.asarray(h, dtype=complex) for h in self.controls])
        init = np.atleast_2d(np.asarray(self.initial, dtype=complex))
        targ = np.atleast_2d(np.asarray(self.targets, dtype=complex))
        self.initial, self.targets = init, targ
        n = self.drift.shape[0]
        if self.drift.shape != (n, n) or self.controls.ndim != 3 or self.controls.shape[1:] != (n, n):
            raise ValueError("drift and control operators must share one square shape")
        if init.shape != targ.shape or init.shape[1] != n:
            raise ValueError("initial and target states must pair up and match the operator dimension")
        for v in (*init, *targ):
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValueError("states must be normalized")
        if self.kind not in FIDELITY_KINDS:
            raise ValueError(f"unknown fidelity kind {self.kind!r}")
        if self.commutes is None:
            self.commutes = commutation_table(self.controls)
        self.exchangeable = _exchangeable(self.drift, self.controls, self.commutes)
        if self.closed is not None:
            self._check_closed()

    def _check_closed(self):
        c = self.closed
        c = ClosedSystem(np.asarray(c.drift, dtype=complex), np.asarray(c.controls, dtype=complex))
        if c.controls.shape[0] != self.K or c.drift.shape[0] ** 2 != self.dim:
            raise ValueError("closed-system Hamiltonians do not match the Liouville problem")
        drift, ctrls = c.liouville()
        scale = max(1.0, np.abs(self.drift).max(), np.abs(self.controls).max())
        if (np.abs(drift - self.drift).max() > 1e-10 * scale
                or np.abs(ctrls - self.controls).max() > 1e-10 * scale):
            raise ValueError("closed-system Hamiltonians do not reproduce the Liouville generators")
        self.closed = c

    @property
    def K(self) -> int:
        return self.controls.shape[0]

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    def generator(self, amplitudes_slice, power: float) -> np.ndarray:
        return self.drift + power * np.tensordot(amplitudes_slice, self.controls, axes=1)

    def liouville_only(self) -> "ControlProblem":
        """Same problem with the closed-system shortcut switched off."""
        return replace(self, closed=None, commutes=self.commutes.copy())


def commutation_table(controls) -> np.ndarray:
    K = len(controls)
    table = np.ones((K, K), dtype=bool)
    for k in range(K):
        for j in range(k + 1, K):
            comm = controls[k] @ controls[j] - controls[j] @ controls[k]
            table[k, j] = table[j, k] = np.abs(comm).sum(axis=0).max() < COMMUTE_TOL
    return table


def _is_central(h, others) -> bool:
    return all(np.abs(h @ o - o @ h).sum(axis=0).max() < COMMUTE_TOL for o in others)


def _exchangeable(drift, controls, commutes) -> np.ndarray:
    """Pairs whose ordered second-derivative blocks coincide.

    Commuting control operators are not enough: both must also commute with
    every term of the slice generator, otherwise the two orders differ.
    """
    central = [_is_central(h, [drift, *controls]) for h in controls]
    return commutes & np.outer(central, central)


@dataclass
class DerivativeBundle:
    value: float | complex
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None
    forward: np.ndarray | None = None   # (Q, N+1, dim)
    backward: np.ndarray | None = None  # (Q, N+1, dim)
    counters: dict = field(default_factory=dict)
    members: list | None = None         # per-member values for ensembles


# --- slice-level kernels ------------------------------------------------------

def _slice_exponential(problem, controls, s, order, pairs=(), opts=EXP_OPTS):
    A = -1j * controls.dt * problem.generator(controls.amplitudes[:, s], controls.power)
    dirs = (-1j * controls.dt * controls.power) * problem.controls if order >= 1 else []
    return matexp.expm_frechet_blocks(A, dirs, pairs if order >= 2 else (), opts)


def _second_blocks(E, index, exchangeable):
    """Symmetric K x K array of mixed second derivatives from ordered half-blocks."""
    K = exchangeable.shape[0]
    S = np.empty((K, K, *E.shape[1:]), dtype=complex)
    for k in range(K):
        for j in range(k, K):
            if j == k or exchangeable[k, j]:
                blk = 2.0 * E[index[(k, j)]]
            else:
                # forced symmetry: average of both orders
                blk = E[index[(k, j)]] + E[index[(j, k)]]
            S[k, j] = S[j, k] = blk
    return S


def _slice_blocks(problem, controls, s, order):
    """Liouville-space propagator ``P``, first derivatives ``D[k]`` and second ``S[k, j]``."""
    if problem.closed is not None:
        return _closed_blocks(problem, controls, s, order)
    pairs = hessian_pairs(problem.exchangeable) if order >= 2 else ()
    P, D, E = _slice_exponential(problem, controls, s, order, pairs)
    S = None
    if order >= 2:
        S = _second_blocks(E, {p: i for i, p in enumerate(pairs)}, problem.exchangeable)
    return P, (D if order >= 1 else None), S


def _closed_blocks(problem, controls, s, order):
    c = problem.closed
    K = problem.K
    H = c.drift + controls.power * np.tensordot(controls.amplitudes[:, s], c.controls, axes=1)
    dirs = (-1j * controls.dt * controls.power) * c.controls if order >= 1 else []
    pairs = [(k, j) for k in range(K) for j in range(K)] if order >= 2 else ()
    U, dU, EU = matexp.expm_frechet_blocks(-1j * controls.dt * H, dirs, pairs, EXP_OPTS)
    Uc = U.conj()
    P = np.kron(Uc, U)
    if order < 1:
        return P, None, None
    D = np.array([np.kron(d.conj(), U) + np.kron(Uc, d) for d in dU])
    if order < 2:
        return P, D, None
    S = np.empty((K, K, *P.shape), dtype=complex)
    for k in range(K):
        for j in range(k, K):
            d2 = EU[k * K + j] + EU[j * K + k]
            blk = (np.kron(d2.conj(), U) + np.kron(Uc, d2)
                   + np.kron(dU[k].conj(), dU[j]) + np.kron(dU[j].conj(), dU[k]))
            S[k, j] = S[j, k] = blk
    return P, D, S


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PULSE_THREADS", "1")))
    except ValueError:
        return 1


def slice_propagator(problem: ControlProblem, controls: ControlSet, s: int) -> np.ndarray:
    """Propagator of slice ``s`` (zero-based)."""
    if not 0 <= s < controls.N:
        raise IndexError(f"slice {s} out of range 0..{controls.N - 1}")
    return _slice_blocks(problem, controls, s, 0)[0]


def _propagate(props, problem):
    """Forward and backward trajectories from dense slice propagators."""
    N = len(props)
    Q, d = problem.initial.shape
    fwd = np.empty((Q, N + 1, d), dtype=complex)
    bwd = np.empty((Q, N + 1, d), dtype=complex)
    fwd[:, 0] = problem.initial
    bwd[:, N] = problem.targets
    for s in range(N):
        fwd[:, s + 1] = fwd[:, s] @ props[s].T
    for s in range(N - 1, -1, -1):
        bwd[:, s] = bwd[:, s + 1] @ props[s].conj()
    return fwd, bwd


def trajectories(problem: ControlProblem, controls: ControlSet, *, mode: str = "action",
                 threads: int | None = None):
    """Forward states ``rho_0..rho_N`` and adjoint states ``chi_1..chi_{N+1}``.

    Returns arrays of shape ``(Q, N + 1, dim)``; ``bwd[:, s]`` holds the
    adjoint state that pairs with slice ``s - 1`` (see module docstring).
    """
    threads = threads or default_threads()
    if mode == "action":
        return _propagate_action(problem, controls)
    if mode != "dense":
        raise ValueError(f"unknown mode {mode!r}")
    props = _map(lambda s: _slice_blocks(problem, controls, s, 0)[0],
                 range(controls.N), threads)
    return _propagate(props, problem)


def _propagate_action(problem, controls):
    N = controls.N
    Q, d = problem.initial.shape
    fwd = np.empty((Q, N + 1, d), dtype=complex)
    bwd = np.empty((Q, N + 1, d), dtype=complex)
    fwd[:, 0] = problem.initial
    bwd[:, N] = problem.targets
    gens = [problem.generator(controls.amplitudes[:, s], controls.power) for s in range(N)]
    for s in range(N):
        fwd[:, s + 1] = matexp.expm_action(-1j * controls.dt * gens[s], fwd[:, s].T,
                                           EXP_OPTS).T
    for s in range(N - 1, -1, -1):
        bwd[:, s] = matexp.expm_action(1j * controls.dt * gens[s].conj().T, bwd[:, s + 1].T,
                                       EXP_OPTS).T
    return fwd, bwd


def _overlaps(problem, fwd, bwd):
    # f_q = <sigma_q | rho_q(T)>
    return np.einsum("qi,qi->q", problem.targets.conj(), fwd[:, -1])


def _combine(kind, f, df=None, d2f=None):
    """Fidelity value and derivatives from raw overlaps (averaged over state pairs)."""
    if kind == "J0":
        val = f.mean()
        g = None if df is None else df.mean(axis=0)
        h = None if d2f is None else d2f.mean(axis=0)
    elif kind == "J1":
        val = f.real.mean()
        g = None if df is None else df.real.mean(axis=0)
        h = None if d2f is None else d2f.real.mean(axis=0)
    else:
        val = (np.abs(f) ** 2).mean()
        g = None if df is None else (2 * (f.conj()[:, None] * df).real).mean(axis=0)
        h = None
        if d2f is not None:
            cross = np.einsum("qa,qb->qab", df, df.conj()).real
            h = (2 * (f.conj()[:, None, None] * d2f).real + 2 * cross).mean(axis=0)
    return val, g, h


def fidelity(problem: ControlProblem, controls: ControlSet, **kw):
    kw.setdefault("mode", "dense")
    fwd, bwd = trajectories(problem, controls, **kw)
    return _combine(problem.kind, _overlaps(problem, fwd, bwd))[0]


def gradient(problem: ControlProblem, controls: ControlSet, *, mode: str = "dense",
             threads: int | None = None) -> DerivativeBundle:
    """Fidelity and its exact gradient from one forward and one backward pass."""
    threads = threads or default_threads()
    N, K = controls.N, problem.K
    if mode == "action":
        fwd, bwd = _propagate_action(problem, controls)
        df = np.empty((problem.initial.shape[0], N, K), dtype=complex)
        for s in range(N):
            gen = problem.generator(controls.amplitudes[:, s], controls.power)
            for k in range(K):
                blocks = matexp.AugmentedBlocks(gen, controls.power * problem.controls[k],
                                                None, -1j * controls.dt)
                dv = matexp.aux_action(blocks, fwd[:, s].T, EXP_OPTS).T
                df[:, s, k] = np.einsum("qi,qi->q", bwd[:, s + 1].conj(), dv)
        n_exp = 2 * N + N * K
    elif mode == "dense":
        blocks = _map(lambda s: _slice_blocks(problem, controls, s, 1)[:2],
                      range(N), threads)
        fwd, bwd = _propagate([b[0] for b in blocks], problem)
        df = np.empty((problem.initial.shape[0], N, K), dtype=complex)
        for s, (_, D) in enumerate(blocks):
            # <bwd[s+1]| D_k |fwd[s]>
            df[:, s, :] = np.einsum("qi,kij,qj->qk", bwd[:, s + 1].conj(), D, fwd[:, s])
        n_exp = N
    else:
        raise ValueError(f"unknown mode {mode!r}")
    f = _overlaps(problem, fwd, bwd)
    val, g, _ = _combine(problem.kind, f, df.reshape(len(f), N * K))
    return DerivativeBundle(val, g, None, fwd, bwd,
                            {"evaluations": 1, "gradients": 1, "exponentials": n_exp})


def hessian_pairs(exchangeable: np.ndarray) -> list[tuple[int, int]]:
    """Ordered control pairs needing a second-derivative block exponential."""
    K = exchangeable.shape[0]
    pairs = []
    for k in range(K):
        for j in range(k, K):
            pairs.append((k, j))
            if j != k and not exchangeable[k, j]:
                pairs.append((j, k))
    return pairs


def hessian(problem: ControlProblem, controls: ControlSet, *,
            threads: int | None = None) -> DerivativeBundle:
    """Fidelity, gradient and Hessian.

    Same-slice blocks come from 3x3 block exponentials; the first
    derivatives inside those exponentials are reused for the gradient and
    for the blocks coupling different slices.
    """
    threads = threads or default_threads()
    N, K = controls.N, problem.K
    Q = problem.initial.shape[0]
    props = _map(lambda s: _slice_blocks(problem, controls, s, 0)[0], range(N), threads)
    fwd, bwd = _propagate(props, problem)

    def second_order(s):
        _, D, S = _slice_blocks(problem, controls, s, 2)
        u = np.einsum("kij,qj->qki", D, fwd[:, s])             # D_k rho
        a = np.einsum("qi,kij->qkj", bwd[:, s + 1].conj(), D)  # <chi| D_k
        diag = np.einsum("qi,kjil,ql->qkj", bwd[:, s + 1].conj(), S, fwd[:, s])
        return u, a, diag

    results = _map(second_order, range(N), threads)
    u = np.stack([r[0] for r in results], axis=1)      # (Q, N, K, d)
    a = np.stack([r[1] for r in results], axis=1)      # (Q, N, K, d), already conjugated
    df = np.einsum("qskd,qsd->qsk", a, fwd[:, :N])      # gradient from recycled D
    df = df.reshape(Q, N * K)

    d2f = np.zeros((Q, N, K, N, K), dtype=complex)
    for s in range(N):
        d2f[:, s, :, s, :] = results[s][2]

    def off_diagonal(m):
        # column block m: propagate D_j(P_m) rho_{m} forward through later slices
        out = np.zeros((Q, N, K, K), dtype=complex)
        W = u[:, m]  # (Q, K, d)
        for n in range(m + 1, N):
            out[:, n] = np.einsum("qkd,qjd->qkj", a[:, n], W)
            if n + 1 < N:
                W = W @ props[n].T
        return out

    for m, out in enumerate(_map(off_diagonal, range(N - 1), threads)):
        for n in range(m + 1, N):
            d2f[:, n, :, m, :] = out[:, n]
            d2f[:, m, :, n, :] = out[:, n].transpose(0, 2, 1)
    d2f = d2f.reshape(Q, N * K, N * K)

    f = _overlaps(problem, fwd, bwd)
    val, g, h = _combine(problem.kind, f, df, d2f)
    return DerivativeBundle(val, g, h, fwd, bwd,
                            {"evaluations": 1, "gradients": 1, "hessians": 1,
                             "exponentials": 2 * N})


def evaluate(problem, controls, order: int = 1, **kw) -> DerivativeBundle:
    if order == 0:
        kw.setdefault("mode", "dense")
        fwd, bwd = trajectories(problem, controls, **kw)
        val = _combine(problem.kind, _overlaps(problem, fwd, bwd))[0]
        return DerivativeBundle(val, None, None, fwd, bwd, {"evaluations": 1})
    if order == 1:
        return gradient(problem, controls, **kw)
    kw.pop("mode", None)
    return hessian(problem, controls, **kw)


def ensemble_evaluate(members: Sequence[tuple[float, ControlProblem]], controls: ControlSet,
                      order: str | int = "gradient", threads: int | None = None) -> DerivativeBundle:
    """Weighted average of value, gradient (and Hessian) over ensemble members.

    Weights are normalized to sum to one. Members are reduced in the given
    order so the result does not depend on scheduling.
    """
    if not members:
        raise ValueError("empty ensemble")
    order = {"value": 0, "gradient": 1, "hessian": 2}.get(order, order)
    weights = np.array([w for w, _ in members], dtype=float)
    if np.any(weights <= 0):
        raise ValueError("ensemble weights must be positive")
    weights = weights / weights.sum()
    bundles = [evaluate(p, controls, order, threads=threads) for _, p in members]
    value = sum(w * b.value for w, b in zip(weights, bundles))
    grad = None if order < 1 else sum(w * b.gradient for w, b in zip(weights, bundles))
    hess = None if order < 2 else sum(w * b.hessian for w, b in zip(weights, bundles))
    counters: dict = {}
    for b in bundles:
        for key, v in b.counters.items():
            counters[key] = counters.get(key, 0) + v
    first = bundles[0]
    return DerivativeBundle(value, grad, hess, first.forward, first.backward, counters,
                            members=[b.value for b in bundles])


def with_power_scale(problem: ControlProblem, factor: float) -> ControlProblem:
    """Member of a power-miscalibration grid: control generators scaled by ``factor``."""
    closed = problem.closed
    if closed is not None:
        closed = ClosedSystem(closed.drift, factor * closed.controls)
    return replace(problem, controls=factor * np.asarray(problem.controls),
                   commutes=problem.commutes.copy(), closed=closed)


def with_drift_term(problem: ControlProblem, extra, hilbert_extra=None) -> ControlProblem:
    """Member of an offset grid: ``extra`` added to the drift generator.

    ``hilbert_extra`` is the matching Hamiltonian term; without it the
    closed-system shortcut is dropped for the new member.
    """
    closed = None
    if problem.closed is not None and hilbert_extra is not None:
        closed = ClosedSystem(problem.closed.drift + np.asarray(hilbert_extra, dtype=complex),
                              problem.closed.controls)
    return replace(problem, drift=problem.drift + np.asarray(extra, dtype=complex),
                   commutes=problem.commutes.copy(), closed=closed)
