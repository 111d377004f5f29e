import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_controls, two_spin_problem
from newtongrape import penalty as P
from newtongrape.optim import (Evaluation, LBFGSHistory, LineSearchError, OptimizerConfig,
                               RegularizationError, TRACE_COLUMNS, backtracking_search,
                               bracket_section_search, broyden_update, cholesky_regularize,
                               inverse_broyden_update, is_negative_definite, lbfgs_direction,
                               maximize, optimize, rfo_regularize, sr1_update, trm_regularize)


def concave_quadratic(n, seed):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(n, n))
    A = Q @ Q.T + n * np.eye(n)       # F = -x.A.x/2 + b.x
    b = rng.normal(size=n)

    def fun(x, order=1):
        f = -0.5 * x @ A @ x + b @ x
        return Evaluation(f, b - A @ x, -A if order >= 2 else None)
    return fun, A, b


def neg_rosenbrock(x, order=1):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    H = np.array([[2 - 400 * (b - 3 * a * a), -400 * a], [-400 * a, 200.0]])
    return Evaluation(-f, -g, -H if order >= 2 else None)


# --- line searches -------------------------------------------------------------------

def test_backtracking_armijo():
    fun, A, b = concave_quadratic(4, 0)
    x = np.zeros(4)
    ev = fun(x)
    alpha, f, k = backtracking_search(lambda z: fun(z).objective, x, 10 * ev.gradient,
                                      ev.objective, ev.gradient)
    assert f >= ev.objective + 1e-4 * alpha * 10 * ev.gradient @ ev.gradient
    assert k >= 1
    with pytest.raises(ValueError):
        backtracking_search(lambda z: fun(z).objective, x, -ev.gradient, ev.objective, ev.gradient)
    with pytest.raises(LineSearchError):
        backtracking_search(lambda z: -1e9, x, ev.gradient, ev.objective, ev.gradient, max_steps=5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 50))
def test_bracket_section_strong_wolfe(seed, alpha0):
    fun, A, b = concave_quadratic(5, seed)
    x = np.random.default_rng(seed).normal(size=5)
    ev = fun(x)
    d = ev.gradient

    def fg(z):
        e = fun(z)
        return e.objective, e.gradient, None
    alpha, F, G, _, k = bracket_section_search(fg, x, d, ev.objective, ev.gradient, alpha0)
    slope0 = ev.gradient @ d
    assert F >= ev.objective + 1e-4 * alpha * slope0
    assert abs(G @ d) <= 0.9 * slope0 + 1e-12


def test_bracket_section_respects_bound_and_budget():
    fun, _, _ = concave_quadratic(3, 1)
    x = np.zeros(3)
    ev = fun(x)

    def fg(z):
        e = fun(z)
        return e.objective, e.gradient, None
    alpha, F, *_ = bracket_section_search(fg, x, ev.gradient, ev.objective, ev.gradient, 1e-6,
                                          f_bound=ev.objective + 1e-12)
    assert F >= ev.objective + 1e-12
    with pytest.raises(LineSearchError):
        bracket_section_search(lambda z: (-np.inf, np.zeros(3), None), x, ev.gradient,
                               ev.objective, ev.gradient, max_evals=3)


# --- quasi-Newton ---------------------------------------------------------------------

def test_secant_conditions():
    rng = np.random.default_rng(2)
    n = 6
    B = np.eye(n)
    Binv = np.eye(n)
    for _ in range(10):
        s = rng.normal(size=n)
        y = s + 0.3 * rng.normal(size=n)
        if s @ y <= 0:
            continue
        for phi in (0.0, 0.5, 1.0):
            assert np.allclose(broyden_update(B, s, y, phi) @ s, y)
            assert np.allclose(inverse_broyden_update(Binv, s, y, phi) @ y, s)
        B2 = sr1_update(B, s, y)
        assert np.allclose(B2 @ s, y)


def test_updates_skip_bad_curvature():
    stats = {}
    B = np.eye(3)
    s, y = np.array([1.0, 0, 0]), np.array([-1.0, 0, 0])
    assert np.array_equal(broyden_update(B, s, y, 1.0, stats), B)
    assert np.array_equal(inverse_broyden_update(B, s, y, 1.0, stats), B)
    assert np.array_equal(sr1_update(B, s, s, stats), B)     # r = 0
    assert stats["skipped"] == 3
    h = LBFGSHistory(2)
    assert not h.push(s, y) and h.skipped == 1
    with pytest.raises(ValueError):
        LBFGSHistory(0)


def test_lbfgs_matches_inverse_bfgs_with_full_memory():
    rng = np.random.default_rng(3)
    n = 8
    pairs = []
    for _ in range(5):
        s = rng.normal(size=n)
        y = s + 0.2 * rng.normal(size=n)
        pairs.append((s, y))
    # default initial scaling comes from the newest pair
    s, y = pairs[-1]
    H = np.eye(n) * (s @ y) / (y @ y)
    for s, y in pairs:
        H = inverse_broyden_update(H, s, y)
    g = rng.normal(size=n)
    assert np.allclose(lbfgs_direction(pairs, g), H @ g, atol=1e-12)
    assert np.allclose(lbfgs_direction(pairs, g, 0), g)
    H = 0.3 * np.eye(n)
    for s, y in pairs:
        H = inverse_broyden_update(H, s, y)
    assert np.allclose(lbfgs_direction(pairs, g, h0=0.3), H @ g, atol=1e-12)


# --- regularizers ---------------------------------------------------------------------

def test_cholesky_and_trm():
    H = np.diag([-3.0, 1.0, -0.5])
    assert not is_negative_definite(H)
    Hr, sigma, it = cholesky_regularize(H)
    assert is_negative_definite(Hr) and sigma > 0 and it >= 1
    assert cholesky_regularize(-np.eye(2))[1] == 0.0
    Ht, sigma = trm_regularize(H, 0.25)
    assert np.linalg.eigvalsh(-Ht).min() >= 0.25 - 1e-12
    with pytest.raises(ValueError):
        trm_regularize(H, 0.0)
    with pytest.raises(RegularizationError):
        cholesky_regularize(np.array([[np.nan, 0], [0, 1.0]]))


def test_rfo_newton_when_well_conditioned():
    H = -np.diag([1.0, 2.0])
    g = np.array([1.0, 1.0])
    r = rfo_regularize(H, g)
    assert r.iterations == 0 and np.allclose(r.direction, [1.0, 0.5])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rfo_bounds_condition(seed):
    rng = np.random.default_rng(seed)
    n = 6
    Q = np.linalg.qr(rng.normal(size=(n, n)))[0]
    lam = rng.choice([-1, 1], n) * 10.0 ** rng.uniform(-8, 3, n)
    H = (Q * lam) @ Q.T
    g = rng.normal(size=n)
    r = rfo_regularize(H, g, 1e4)
    assert r.cond <= 1e4 * 1.05
    assert g @ r.direction > 0
    assert is_negative_definite(r.hessian)


# --- driver ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(method="adam")
    with pytest.raises(ValueError):
        OptimizerConfig(c1=0.5, c2=0.1)
    with pytest.raises(ValueError):
        OptimizerConfig(method="bfgs", line_search="none")
    with pytest.raises(ValueError):
        OptimizerConfig.from_dict({"speed": 1})
    cfg = OptimizerConfig(method="lbfgs", lbfgs_memory=5)
    assert OptimizerConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("method", ["gradient", "sr1", "bfgs", "dfp", "broyden", "lbfgs", "newton"])
def test_methods_reach_quadratic_maximum(method):
    fun, A, b = concave_quadratic(6, 4)
    cfg = OptimizerConfig(method=method, max_iterations=500, grad_inf_tol=1e-8,
                          broyden_phi=0.5, line_search="backtracking" if method == "gradient"
                          else "bracket_section")
    res = maximize(fun, np.zeros(6), cfg)
    assert res.trace.status == "converged-gradient"
    assert np.allclose(res.x, np.linalg.solve(A, b), atol=1e-6)


@pytest.mark.parametrize("reg", ["none", "cholesky", "trm", "rfo"])
def test_newton_regularizers_on_rosenbrock(reg):
    cfg = OptimizerConfig(method="newton", regularizer=reg, max_iterations=200,
                          grad_inf_tol=1e-8)
    res = maximize(neg_rosenbrock, np.array([-1.2, 1.0]), cfg)
    assert np.allclose(res.x, [1, 1], atol=1e-6)


def test_direct_bfgs_with_rfo():
    cfg = OptimizerConfig(method="bfgs", inverse_update=False, regularizer="rfo",
                          max_iterations=300, grad_inf_tol=1e-6)
    res = maximize(neg_rosenbrock, np.array([-1.2, 1.0]), cfg)
    assert np.allclose(res.x, [1, 1], atol=1e-4)


def test_trace_rows_and_termination():
    fun, _, _ = concave_quadratic(4, 5)
    res = maximize(fun, np.zeros(4), OptimizerConfig(method="bfgs", max_iterations=0))
    assert len(res.trace) == 1 and res.trace.status == "max-iterations"
    res = maximize(fun, np.zeros(4), OptimizerConfig(method="bfgs", max_iterations=2,
                                                     grad_inf_tol=0))
    assert [r.iteration for r in res.trace.rows] == [0, 1, 2]
    assert tuple(TRACE_COLUMNS) == ("iteration", "fidelity", "penalty", "objective",
                                    "grad_inf_norm", "step_length", "ls_evals", "reg_iters",
                                    "cond_number", "wall_ms")
    res = maximize(fun, np.zeros(4), OptimizerConfig(method="newton", fidelity_target=-1e9))
    assert res.trace.status == "target-reached" and len(res.trace) == 1
    res = maximize(fun, np.zeros(4), OptimizerConfig(method="gradient", fidelity_delta_tol=1e3,
                                                     line_search="backtracking"))
    assert res.trace.status == "converged-delta"


def test_failures_are_flagged_not_raised():
    def broken(x, order=1):
        f = -float(x @ x) if np.abs(x).max() < 1e-3 else -np.inf
        return Evaluation(f, np.ones_like(x), -np.eye(x.size) if order >= 2 else None)
    res = maximize(broken, np.zeros(3), OptimizerConfig(method="bfgs", max_ls_evals=3))
    assert res.failed and res.trace.status == "failed" and "line search" in res.trace.message
    assert np.array_equal(res.x, np.zeros(3))

    def nan_hessian(x, order=1):
        return Evaluation(0.0, np.ones_like(x), np.full((x.size, x.size), np.nan)
                          if order >= 2 else None)
    res = maximize(nan_hessian, np.zeros(2), OptimizerConfig(method="newton", regularizer="cholesky"))
    assert res.failed and "regularization" in res.trace.message


def test_unit_step_mode_uses_safeguard():
    cfg = OptimizerConfig(method="newton", regularizer="rfo", line_search="none",
                          max_iterations=100, grad_inf_tol=1e-9)
    res = maximize(neg_rosenbrock, np.array([-1.2, 1.0]), cfg)
    assert np.allclose(res.x, [1, 1], atol=1e-6)
    assert all(np.diff(res.trace.column("objective")) >= -1e-12)


def test_pulse_optimize_with_penalty_and_phase_map():
    p = two_spin_problem("J1")
    c = random_controls(p, N=10, T=0.05, seed=2)
    cfg = OptimizerConfig(method="newton", max_iterations=30)
    res = optimize(p, c, cfg, [P.PenaltySpec("norm_square", 1e-3)])
    assert res.fidelity > 0.9 and res.penalty > 0
    assert res.member_values is not None and np.isclose(res.member_values[0], res.fidelity)
    pm = P.PhaseMap(np.full((2, 10), 1.0), [(0, 1), (2, 3)], 4)
    start = random_controls(p, N=10, T=0.05, seed=3)
    start = type(start)(pm.amplitudes(pm.phases(start.amplitudes)), start.dt, start.power)
    res = optimize(p, start, cfg, phase_map=pm)
    r = np.hypot(res.controls.amplitudes[0], res.controls.amplitudes[1])
    assert np.allclose(r, 1.0) and res.fidelity > 0.5
    with pytest.raises(ValueError):
        optimize(two_spin_problem("J0"), c, cfg)
