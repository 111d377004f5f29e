import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from newtongrape import spinop as S


@pytest.mark.parametrize("mult", [2, 3, 4, 5])
def test_spin_algebra(mult):
    o = S.spin_operators(mult)
    s = o.spin
    assert np.allclose(o.x @ o.y - o.y @ o.x, 1j * o.z)
    assert np.allclose(o.y @ o.z - o.z @ o.y, 1j * o.x)
    assert np.allclose(o.sq, s * (s + 1) * np.eye(mult))
    assert np.allclose(o.plus, o.x + 1j * o.y)
    assert np.allclose(np.diag(o.z), s - np.arange(mult))


def test_spin_half_is_half_pauli():
    o = S.spin_operators(2)
    assert np.allclose(o.x, [[0, 0.5], [0.5, 0]])
    assert np.allclose(o.y, [[0, -0.5j], [0.5j, 0]])
    assert np.allclose(o.z, [[0.5, 0], [0, -0.5]])


@pytest.mark.parametrize("bad", [1, 0, 2.5])
def test_invalid_multiplicity(bad):
    with pytest.raises(S.SpinSystemError):
        S.spin_operators(bad)


def test_composite_position():
    z = S.spin_operators(2).z
    op = S.composite_operator((2, 3), [(0, "z")])
    assert np.allclose(op, np.kron(z, np.eye(3)))
    op = S.composite_operator((2, 3), [(1, "Lx")])
    assert np.allclose(op, np.kron(np.eye(2), S.spin_operators(3).x))
    with pytest.raises(S.SpinSystemError):
        S.composite_operator((2, 2), [(2, "z")])
    with pytest.raises(S.SpinSystemError):
        S.composite_operator((2, 2), [(0, "z"), (0, "x")])
    with pytest.raises(S.SpinSystemError):
        S.composite_operator((2, 2), [(0, np.eye(3))])


def test_vec_is_column_major():
    a = np.arange(4.0).reshape(2, 2)
    assert np.allclose(S.vec(a), [0, 2, 1, 3])
    assert np.allclose(S.unvec(S.vec(a)), a)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_commutation_superoperator_identity(seed):
    rng = np.random.default_rng(seed)
    n = 4
    h = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    L = np.asarray(S.commutation_superoperator(h))
    assert np.allclose(L @ S.vec(x), S.vec(h @ x - x @ h))


def test_weak_and_strong_coupling():
    a = 2 * np.pi * 50.0
    strong = S.SpinSystem((2, 2), j_couplings=(S.JCoupling(0, 1, a),))
    weak = S.SpinSystem((2, 2), j_couplings=(S.JCoupling(0, 1, a, True),))
    zz = S.composite_operator(strong, [(0, "z"), (1, "z")])
    xx = S.composite_operator(strong, [(0, "x"), (1, "x")])
    yy = S.composite_operator(strong, [(0, "y"), (1, "y")])
    assert np.allclose(S.drift_hamiltonian(weak), a * zz)
    assert np.allclose(S.drift_hamiltonian(strong), a * (xx + yy + zz))


def test_offsets_and_quadrupolar():
    V = 2 * np.pi * np.diag([1.0, 2.0, -3.0]) * 1e4
    sysm = S.SpinSystem((3,), offsets=(10.0,), quadrupolar=((0, V),))
    o = S.spin_operators(3)
    ops = [o.x, o.y, o.z]
    quad = sum(V[i, j] * ops[i] @ ops[j] for i in range(3) for j in range(3))
    assert np.allclose(S.drift_hamiltonian(sysm), 10.0 * o.z + quad)
    with pytest.raises(S.SpinSystemError):
        S.SpinSystem((2,), quadrupolar=((0, V),))
    with pytest.raises(S.SpinSystemError):
        S.SpinSystem((3,), quadrupolar=((0, np.triu(np.ones((3, 3)))),))


def test_system_validation():
    with pytest.raises(S.SpinSystemError):
        S.SpinSystem((2, 2), offsets=(1.0,))
    with pytest.raises(S.SpinSystemError):
        S.SpinSystem((2, 2), j_couplings=(S.JCoupling(0, 0, 1.0),))
    with pytest.raises(S.SpinSystemError):
        S.SpinSystem((2, 2), j_couplings=(S.JCoupling(0, 5, 1.0),))
    with pytest.raises(S.SpinSystemError):
        S.SpinSystem((2,), r1=-1.0)


def test_liouvillian_relaxation_decays():
    sysm = S.SpinSystem((2,), offsets=(2 * np.pi * 10,), r1=1.0, r2=3.0)
    L = np.asarray(S.liouvillian(sysm))
    P = sla.expm(-1j * L * 0.5)
    rho = S.vec(S.spin_operators(2).x)
    out = S.unvec(P @ rho)
    # transverse magnetization decays with R2
    assert np.isclose(np.abs(out[0, 1]), 0.5 * np.exp(-1.5))
    # closed case: unitary
    closed = np.asarray(S.liouvillian(S.SpinSystem((2,), offsets=(1.0,))))
    U = sla.expm(-1j * closed)
    assert np.allclose(U.conj().T @ U, np.eye(4))


def test_states_normalized_and_orthogonal():
    sysm = S.SpinSystem((2, 2))
    for spec in ("Lz:0", "Lz:0+1", "Lx:1", "singlet:0,1", "T22:0,1", "T20:0,1"):
        assert abs(np.linalg.norm(S.state_builder(sysm, spec)) - 1) < 1e-12
    lz = S.state_builder(sysm, "Lz:0+1")
    singlet = S.state_builder(sysm, "singlet:0,1")
    assert abs(np.vdot(singlet, lz)) < 1e-14


def test_singlet_bound_is_inverse_sqrt2():
    # the largest overlap of the singlet with any unitary image of Lz1+Lz2:
    # eigenvalues sorted in matching order (a majorization bound)
    sysm = S.SpinSystem((2, 2))
    rho = S.unvec(S.state_builder(sysm, "Lz:0+1"))
    sig = S.unvec(S.state_builder(sysm, "singlet:0,1"))
    a = np.sort(np.linalg.eigvalsh(rho))
    b = np.sort(np.linalg.eigvalsh(sig))
    assert np.isclose(a @ b, 1 / np.sqrt(2))


def test_spherical_tensors():
    sysm = S.SpinSystem((3,))
    o = S.spin_operators(3)
    assert np.allclose(S.state_operator(sysm, "T22", [0]), 0.5 * o.plus @ o.plus)
    assert np.allclose(S.state_operator(sysm, "T10", [0]), o.z)
    assert np.allclose(S.state_operator(sysm, "T11", [0]), -o.plus / np.sqrt(2))
    # rank-2 tensor commutation with Lz: [Lz, T2m] = m T2m
    for name, m in (("T22", 2), ("T21", 1), ("T20", 0), ("T2-1", -1), ("T2-2", -2)):
        t = S.state_operator(sysm, name, [0])
        assert np.allclose(o.z @ t - t @ o.z, m * t)
    with pytest.raises(S.SpinSystemError):
        S.state_operator(sysm, "T10", [0, 0])


def test_spec_parsing_and_errors():
    assert S.parse_state_spec("Lz:0+1") == ("Lz", [0, 1])
    assert S.parse_state_spec("singlet:0,1") == ("singlet", [0, 1])
    sysm = S.SpinSystem((2, 3))
    with pytest.raises(S.SpinSystemError):
        S.parse_state_spec("Lz")
    with pytest.raises(S.SpinSystemError):
        S.state_builder(sysm, "Foo:0")
    with pytest.raises(S.SpinSystemError):
        S.state_builder(sysm, "singlet:0,1")
    with pytest.raises(S.SpinSystemError):
        S.control_superoperator(sysm, "T22:1")
    L = np.asarray(S.control_superoperator(sysm, "Ly:0+1"))
    h = S.state_operator(sysm, "Ly", [0, 1])
    assert np.allclose(L, np.asarray(S.commutation_superoperator(h)))
