"""Spin operators, spin-system Hamiltonians and Liouville-space superoperators.

All Hilbert-space operators are dense complex numpy arrays in the Zeeman
product basis. Liouville-space vectors use column-wise (Fortran order)
vectorization of the density matrix, so that ``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

# entries below this magnitude are dropped when operators are built
DROP_TOL = 1e-14


class SpinSystemError(ValueError):
    """Invalid spin-system description or operator request."""


def _clean(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a[np.abs(a) < DROP_TOL] = 0.0
    return a


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-wise vectorization of a square matrix."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    n = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape((n, n), order="F")


@dataclass(frozen=True)
class SpinOperators:
    """Single-spin operators for one multiplicity."""

    mult: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    sq: np.ndarray

    def __getitem__(self, name: str) -> np.ndarray:
        return _OP_ALIASES[name](self)

    @property
    def spin(self) -> float:
        return (self.mult - 1) / 2


_OP_ALIASES = {
    "x": lambda s: s.x, "Lx": lambda s: s.x,
    "y": lambda s: s.y, "Ly": lambda s: s.y,
    "z": lambda s: s.z, "Lz": lambda s: s.z,
    "+": lambda s: s.plus, "L+": lambda s: s.plus,
    "-": lambda s: s.minus, "L-": lambda s: s.minus,
    "sq": lambda s: s.sq, "E": lambda s: np.eye(s.mult, dtype=complex),
}


def spin_operators(mult: int) -> SpinOperators:
    """Return Sx, Sy, Sz, S+, S-, S^2 for a spin of multiplicity ``mult = 2s+1``.

    The basis is ordered m = s, s-1, ..., -s.
    """
    if int(mult) != mult or mult < 2:
        raise SpinSystemError(f"invalid multiplicity {mult!r}; need an integer >= 2")
    mult = int(mult)
    s = (mult - 1) / 2
    m = s - np.arange(mult)
    # S+|s,m> = sqrt(s(s+1) - m(m+1)) |s,m+1>; row index of m+1 is one above
    plus = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    minus = plus.conj().T
    sx = (plus + minus) / 2
    sy = (plus - minus) / 2j
    sz = np.diag(m).astype(complex)
    sq = sx @ sx + sy @ sy + sz @ sz
    return SpinOperators(mult, _clean(sx), _clean(sy), _clean(sz),
                         _clean(plus), _clean(minus), _clean(sq))


@dataclass(frozen=True)
class JCoupling:
    i: int
    j: int
    a: float  # rad/s
    weak: bool = False  # keep only the Lz-Lz term


@dataclass(frozen=True)
class SpinSystem:
    """Declarative spin inventory.

    Offsets, couplings and quadrupolar tensors are angular frequencies (rad/s);
    relaxation rates are in 1/s. Spin indices are zero-based.
    """

    spins: tuple[int, ...]
    offsets: tuple[float, ...] = ()
    j_couplings: tuple[JCoupling, ...] = ()
    quadrupolar: tuple[tuple[int, np.ndarray], ...] = ()
    r1: float = 0.0
    r2: float = 0.0

    def __post_init__(self):
        spins = tuple(int(m) for m in self.spins)
        object.__setattr__(self, "spins", spins)
        if not spins:
            raise SpinSystemError("a spin system needs at least one spin")
        for m in spins:
            if m < 2:
                raise SpinSystemError(f"invalid multiplicity {m}")
        offsets = tuple(float(w) for w in self.offsets) or (0.0,) * len(spins)
        if len(offsets) != len(spins):
            raise SpinSystemError("offsets must give one value per spin")
        object.__setattr__(self, "offsets", offsets)

        couplings = []
        for c in self.j_couplings:
            c = c if isinstance(c, JCoupling) else JCoupling(*c)
            if c.i == c.j:
                raise SpinSystemError(f"coupling indices must differ, got ({c.i}, {c.j})")
            self._check_index(c.i)
            self._check_index(c.j)
            couplings.append(c)
        object.__setattr__(self, "j_couplings", tuple(couplings))

        quad = []
        for k, v in self.quadrupolar:
            self._check_index(k)
            if spins[k] < 3:
                raise SpinSystemError(
                    f"spin {k} has multiplicity {spins[k]}; quadrupolar coupling needs spin >= 1")
            v = np.asarray(v, dtype=float)
            if v.shape != (3, 3):
                raise SpinSystemError("quadrupolar tensor must be 3x3")
            if np.max(np.abs(v - v.T)) > 1e-12 * max(np.max(np.abs(v)), 1.0):
                raise SpinSystemError("quadrupolar tensor must be symmetric")
            v.setflags(write=False)
            quad.append((int(k), v))
        object.__setattr__(self, "quadrupolar", tuple(quad))

        if self.r1 < 0 or self.r2 < 0:
            raise SpinSystemError("relaxation rates must be nonnegative")

    def _check_index(self, k: int) -> None:
        if not 0 <= k < len(self.spins):
            raise SpinSystemError(f"spin index {k} out of range for {len(self.spins)} spins")

    @property
    def hilbert_dim(self) -> int:
        return int(np.prod(self.spins))

    @property
    def liouville_dim(self) -> int:
        return self.hilbert_dim ** 2

    def with_offsets(self, offsets: Sequence[float]) -> "SpinSystem":
        return SpinSystem(self.spins, tuple(offsets), self.j_couplings,
                          self.quadrupolar, self.r1, self.r2)


def composite_operator(system: SpinSystem | Sequence[int],
                       placements: Sequence[tuple[int, np.ndarray | str]]) -> np.ndarray:
    """Kronecker chain with the given single-spin operators at their positions.

    ``placements`` is a list of ``(spin_index, operator)``; the operator may be
    a matrix or a name such as ``"Lz"`` or ``"L+"``. Unlisted positions hold
    identities.
    """
    mults = system.spins if isinstance(system, SpinSystem) else tuple(system)
    chain = [np.eye(m, dtype=complex) for m in mults]
    seen = set()
    for k, op in placements:
        if not 0 <= k < len(mults):
            raise SpinSystemError(f"spin index {k} out of range for {len(mults)} spins")
        if k in seen:
            raise SpinSystemError(f"spin index {k} placed twice")
        seen.add(k)
        if isinstance(op, str):
            op = spin_operators(mults[k])[op]
        op = np.asarray(op, dtype=complex)
        if op.shape != (mults[k], mults[k]):
            raise SpinSystemError(
                f"operator of shape {op.shape} does not fit spin {k} (multiplicity {mults[k]})")
        chain[k] = op
    return _clean(reduce(np.kron, chain))


def drift_hamiltonian(system: SpinSystem) -> np.ndarray:
    """Zeeman offsets + scalar couplings + quadrupolar terms (rad/s)."""
    dim = system.hilbert_dim
    h = np.zeros((dim, dim), dtype=complex)
    for k, w in enumerate(system.offsets):
        if w:
            h += w * composite_operator(system, [(k, "Lz")])
    for c in system.j_couplings:
        axes = "z" if c.weak else "xyz"
        for ax in axes:
            h += c.a * composite_operator(system, [(c.i, ax), (c.j, ax)])
    for k, v in system.quadrupolar:
        ops = spin_operators(system.spins[k])
        vecop = (ops.x, ops.y, ops.z)
        single = sum(v[a, b] * vecop[a] @ vecop[b] for a in range(3) for b in range(3))
        h += composite_operator(system, [(k, single)])
    return _clean(h)


@dataclass(frozen=True)
class Superoperator:
    """Liouville-space matrix with a couple of descriptive flags."""

    matrix: np.ndarray
    is_hermitian: bool = False
    includes_relaxation: bool = False

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def commutation_superoperator(h: np.ndarray) -> Superoperator:
    """Superoperator ``L`` with ``L @ vec(X) == vec(H X - X H)``."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise SpinSystemError(f"expected a square matrix, got shape {h.shape}")
    unit = np.eye(h.shape[0], dtype=complex)
    L = _clean(np.kron(unit, h) - np.kron(h.T, unit))
    herm = bool(np.allclose(h, h.conj().T, atol=1e-12, rtol=0))
    return Superoperator(L, is_hermitian=herm)


def relaxation_superoperator(system: SpinSystem) -> Superoperator:
    """Diagonal T1/T2 relaxation rates (1/s) in vec ordering.

    Positions holding diagonal density-matrix elements get ``r1``, the rest
    ``r2``. The rates are positive; :func:`liouvillian` subtracts ``i*R`` so
    that propagation decays.
    """
    if system.r1 < 0 or system.r2 < 0:
        raise SpinSystemError("relaxation rates must be nonnegative")
    n = system.hilbert_dim
    rates = np.full((n, n), system.r2, dtype=float)
    np.fill_diagonal(rates, system.r1)
    R = np.diag(vec(rates)).astype(complex)
    return Superoperator(R, is_hermitian=True, includes_relaxation=True)


def liouvillian(system: SpinSystem) -> Superoperator:
    """Drift generator ``L0 = [H0, .] - i R`` so that ``exp(-i L0 t)`` relaxes."""
    L = commutation_superoperator(drift_hamiltonian(system)).matrix
    relax = system.r1 > 0 or system.r2 > 0
    if relax:
        L = L - 1j * relaxation_superoperator(system).matrix
    return Superoperator(L, is_hermitian=not relax, includes_relaxation=relax)


# --- states -----------------------------------------------------------------

_LINEAR = {"Lx": "x", "Ly": "y", "Lz": "z", "L+": "+", "L-": "-"}


def _tensor_operator(system: SpinSystem, name: str, spins: Sequence[int]) -> np.ndarray:
    """Irreducible spherical tensor operators T1m / T2m on one spin or a pair."""
    if len(spins) == 1:
        a = b = spins[0]
    elif len(spins) == 2:
        a, b = spins
    else:
        raise SpinSystemError(f"{name} needs one or two spins")

    def op(k, o):
        return composite_operator(system, [(k, o)])

    def prod(o1, o2):
        if a == b:
            return op(a, o1) @ op(b, o2)
        return composite_operator(system, [(a, o1), (b, o2)])

    if name.startswith("T1"):
        if len(spins) != 1:
            raise SpinSystemError(f"{name} is a single-spin operator")
        return {"T10": op(a, "z"),
                "T11": -op(a, "+") / np.sqrt(2),
                "T1-1": op(a, "-") / np.sqrt(2)}[name]
    table = {
        "T22": lambda: 0.5 * prod("+", "+"),
        "T2-2": lambda: 0.5 * prod("-", "-"),
        "T21": lambda: -0.5 * (prod("z", "+") + prod("+", "z")),
        "T2-1": lambda: 0.5 * (prod("z", "-") + prod("-", "z")),
        "T20": lambda: np.sqrt(2 / 3) * (prod("z", "z")
                                         - 0.25 * (prod("+", "-") + prod("-", "+"))),
    }
    return table[name]()


def singlet_projector(system: SpinSystem, i: int, j: int) -> np.ndarray:
    if system.spins[i] != 2 or system.spins[j] != 2:
        raise SpinSystemError("singlet projector needs two spin-1/2 particles")
    prod = composite_operator(system, [(i, "+"), (j, "-")])
    zz = composite_operator(system, [(i, "z"), (j, "z")])
    unit = np.eye(system.hilbert_dim)
    # |S><S| = 1/4 - Li.Lj
    lxly = 0.5 * (prod + prod.conj().T)
    return _clean(0.25 * unit - lxly - zz)


STATE_NAMES = tuple(_LINEAR) + ("T10", "T11", "T1-1", "T20", "T21", "T2-1",
                                "T22", "T2-2", "singlet")


def state_operator(system: SpinSystem, name: str, spins: Sequence[int]) -> np.ndarray:
    """Hilbert-space operator behind a named state (not normalized)."""
    spins = [int(k) for k in spins]
    for k in spins:
        system._check_index(k)
    if name in _LINEAR:
        return sum(composite_operator(system, [(k, _LINEAR[name])]) for k in spins)
    if name == "singlet":
        if len(spins) != 2:
            raise SpinSystemError("singlet needs exactly two spins")
        return singlet_projector(system, *spins)
    if name in STATE_NAMES:
        return _tensor_operator(system, name, spins)
    raise SpinSystemError(f"unknown state {name!r}; expected one of {STATE_NAMES}")


def parse_state_spec(spec: str) -> tuple[str, list[int]]:
    """Parse ``"Lz:0+1"`` (sum over spins) or ``"T22:0"`` / ``"singlet:0,1"``."""
    try:
        name, idx = spec.split(":")
        sep = "+" if "+" in idx else ","
        spins = [int(t) for t in idx.split(sep)]
    except ValueError as err:
        raise SpinSystemError(f"cannot parse state spec {spec!r}") from err
    return name.strip(), spins


def state_builder(system: SpinSystem, spec: str | tuple[str, Sequence[int]]) -> np.ndarray:
    """Euclidean-normalized Liouville-space state vector.

    ``spec`` is either a string such as ``"Lz:0+1"``, ``"T22:0"``,
    ``"singlet:0,1"`` or a ``(name, spins)`` tuple.
    """
    name, spins = parse_state_spec(spec) if isinstance(spec, str) else spec
    rho = vec(state_operator(system, name, spins))
    norm = np.linalg.norm(rho)
    if norm == 0:
        raise SpinSystemError(f"state {spec!r} is the zero operator")
    return rho / norm


def control_superoperator(system: SpinSystem, spec: str) -> Superoperator:
    """Commutation superoperator of a linear spin operator, e.g. ``"Lx:0"`` or ``"Ly:0+1"``."""
    name, spins = parse_state_spec(spec)
    if name not in ("Lx", "Ly", "Lz"):
        raise SpinSystemError(f"control operators must be Lx/Ly/Lz, got {name!r}")
    return commutation_superoperator(state_operator(system, name, spins))
