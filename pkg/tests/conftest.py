import numpy as np
import pytest

from newtongrape import grape as G
from newtongrape import spinop as S


def two_spin_problem(kind="J1", relax=False, closed=True, weak=False, pairs=1):
    """Small heteronuclear pair: Lz on spin 0 to Lz on spin 1 (optionally more pairs)."""
    r = (3.0, 7.0) if relax else (0.0, 0.0)
    sysm = S.SpinSystem((2, 2), offsets=(2 * np.pi * 30.0, -2 * np.pi * 55.0),
                        j_couplings=(S.JCoupling(0, 1, 2 * np.pi * 80.0, weak),), r1=r[0], r2=r[1])
    ham = [S.state_operator(sysm, n, [k]) for k in (0, 1) for n in ("Lx", "Ly")]
    ctrls = [np.asarray(S.commutation_superoperator(h)) for h in ham]
    init = [S.state_builder(sysm, "Lz:0"), S.state_builder(sysm, "Lx:0")][:pairs]
    targ = [S.state_builder(sysm, "Lz:1"), S.state_builder(sysm, "Ly:1")][:pairs]
    cl = None
    if closed and not relax:
        cl = G.ClosedSystem(S.drift_hamiltonian(sysm), np.array(ham))
    return G.ControlProblem(np.asarray(S.liouvillian(sysm)), ctrls, init, targ, kind, closed=cl)


def random_controls(problem, N=6, seed=0, T=0.02, power=2 * np.pi * 200.0):
    rng = np.random.default_rng(seed)
    return G.ControlSet(rng.uniform(-1, 1, (problem.K, N)), T / N, power)


def fd_gradient(fun, x, h=1e-6):
    out = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.array(out)


def fd_jacobian(fun, x, h=1e-5):
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.array(cols).T


def rel_err(a, b):
    return float(np.abs(np.asarray(a) - np.asarray(b)).max() / max(np.abs(b).max(), 1e-300))


@pytest.fixture
def problem():
    return two_spin_problem()


# --- acceptance summary ----------------------------------------------------------------

ACCEPTANCE: dict = {}


def record(criterion: int, passed: bool, detail: str):
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
