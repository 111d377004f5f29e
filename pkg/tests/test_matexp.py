import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from newtongrape import matexp as M


def herm(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def eig_expm(h, t):
    """exp(-i h t) for Hermitian h by eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 5, 9]),
       st.floats(1e-3, 30.0))
def test_expm_matches_eigendecomposition(seed, n, scale):
    rng = np.random.default_rng(seed)
    h = herm(rng, n)
    P = M.expm(-1j * scale * h)
    assert np.abs(P - eig_expm(h, scale)).max() < 1e-12 * max(1.0, scale)


def test_expm_nonnormal_against_scipy():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 6)) * 2
    ref = sla.expm(a)
    assert np.abs(M.expm(a) - ref).max() < 1e-12 * np.abs(ref).max()


def test_expm_errors():
    with pytest.raises(M.MatexpError):
        M.expm(np.ones((2, 3)))
    with pytest.raises(M.MatexpError):
        M.expm(np.array([[np.inf, 0], [0, 1]]))
    with pytest.raises(ValueError):
        M.ExpOptions(tol=0)
    assert np.allclose(M.expm(np.zeros((3, 3))), np.eye(3))


@pytest.mark.parametrize("t", [0.01, 1.0, 40.0])
def test_expm_action(t):
    rng = np.random.default_rng(1)
    h = herm(rng, 8)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    out = M.expm_action(-1j * t * h, v)
    assert np.allclose(out, eig_expm(h, t) @ v, atol=1e-11)
    assert abs(np.linalg.norm(out) - np.linalg.norm(v)) < 1e-10
    block = rng.normal(size=(8, 3))
    assert np.allclose(M.expm_action(-1j * t * h, block), eig_expm(h, t) @ block, atol=1e-11)
    with pytest.raises(M.MatexpError):
        M.expm_action(h, np.ones(3))


def test_unitarity_of_large_norm_propagator():
    rng = np.random.default_rng(2)
    h = herm(rng, 16, 50.0)
    P = M.expm(-1j * h)
    assert np.abs(P.conj().T @ P - np.eye(16)).max() < 1e-10


def test_first_derivative_vs_finite_differences():
    rng = np.random.default_rng(4)
    H, Hk = herm(rng, 6), herm(rng, 6)
    dt = 0.7
    _, D = M.prop_derivative(H, Hk, dt)
    h = 1e-6
    fd = (eig_expm(H + h * Hk, dt) - eig_expm(H - h * Hk, dt)) / (2 * h)
    assert np.abs(D - fd).max() / np.abs(fd).max() < 1e-7


def test_second_derivative_vs_finite_differences():
    rng = np.random.default_rng(5)
    H, Hk, Hj = herm(rng, 5), herm(rng, 5), herm(rng, 5)
    dt = 0.4
    _, Dk, Dj, D2kj = M.prop_second_derivative(H, Hk, Hj, dt)
    _, _, _, D2jk = M.prop_second_derivative(H, Hj, Hk, dt)
    mixed = (D2kj + D2jk) / 2
    h = 1e-4
    def P(a, b):
        return eig_expm(H + a * Hk + b * Hj, dt)
    fd = (P(h, h) - P(h, -h) - P(-h, h) + P(-h, -h)) / (4 * h * h)
    assert np.abs(mixed - fd).max() / np.abs(fd).max() < 1e-5
    # pure second derivative along one direction
    _, _, _, D2kk = M.prop_second_derivative(H, Hk, Hk, dt)
    fd2 = (P(h, 0) - 2 * P(0, 0) + P(-h, 0)) / (h * h)
    assert np.abs(D2kk - fd2).max() / np.abs(fd2).max() < 1e-5
    # recycled first derivatives agree with the 2x2 path
    assert np.allclose(Dk, M.prop_derivative(H, Hk, dt)[1], atol=1e-13)
    assert np.allclose(Dj, M.prop_derivative(H, Hj, dt)[1], atol=1e-13)


def test_commuting_second_derivative_is_symmetric():
    rng = np.random.default_rng(6)
    H = herm(rng, 4)
    d = np.diag(rng.normal(size=4)).astype(complex)
    e = np.diag(rng.normal(size=4)).astype(complex)
    H = np.diag(np.diag(H))
    _, _, _, a = M.prop_second_derivative(H, d, e, 0.3)
    _, _, _, b = M.prop_second_derivative(H, e, d, 0.3)
    assert np.allclose(a, b, atol=1e-13)


def test_block_recycling_consistency():
    rng = np.random.default_rng(7)
    n = 6
    a = -1j * 0.5 * herm(rng, n)
    dirs = [-1j * 0.5 * herm(rng, n) for _ in range(3)]
    pairs = [(0, 1), (1, 2), (2, 2)]
    P, D, E = M.expm_frechet_blocks(a, dirs, pairs)
    assert np.abs(P - sla.expm(a)).max() < 1e-11
    for k, b in enumerate(dirs):
        big = np.block([[a, b], [np.zeros_like(a), a]])
        ref = sla.expm(big)[:n, n:]
        assert np.abs(D[k] - ref).max() < 1e-11
    for p, (k, j) in enumerate(pairs):
        z = np.zeros_like(a)
        big = np.block([[a, dirs[k], z], [z, a, dirs[j]], [z, z, a]])
        ref = sla.expm(big)[:n, 2 * n:]
        assert np.abs(E[p] - ref).max() < 1e-11


def test_aux_action_matches_dense_blocks():
    rng = np.random.default_rng(8)
    n = 5
    A, B1, B2 = herm(rng, n), herm(rng, n), herm(rng, n)
    t = -1j * 2.0
    v = rng.normal(size=n) + 0j
    _, D, E = M.expm_frechet_blocks(t * A, [t * B1, t * B2], [(0, 1)])
    two = M.aux_action(M.AugmentedBlocks(A, B1, t=t), v)
    three = M.aux_action(M.AugmentedBlocks(A, B1, B2, t=t), v)
    assert np.allclose(two, D[0] @ v, atol=1e-11)
    assert np.allclose(three, E[0] @ v, atol=1e-11)
    with pytest.raises(M.MatexpError):
        M.aux_action(M.AugmentedBlocks(A, np.eye(3)), v)
