"""Generic maximization loop shared by every method."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, NamedTuple

import numpy as np

from .linesearch import LineSearchError, backtracking_search, bracket_section_search
from .quasinewton import (LBFGSHistory, broyden_update, inverse_broyden_update,
                          lbfgs_direction, sr1_update)
from .regularize import (RegularizationError, cholesky_regularize, rfo_regularize,
                         trm_regularize)

METHODS = ("gradient", "sr1", "bfgs", "dfp", "broyden", "lbfgs", "newton")
REGULARIZERS = ("none", "cholesky", "trm", "rfo")
LINE_SEARCHES = ("backtracking", "bracket_section", "none")


@dataclass
class OptimizerConfig:
    method: str = "newton"
    broyden_phi: float = 1.0
    inverse_update: bool = True     # Broyden family on the inverse Hessian
    lbfgs_memory: int = 20
    regularizer: str = "rfo"
    trm_delta: float = 1.0
    rfo_zeta: float = 1e4
    rfo_phi: float = 0.9
    line_search: str = "bracket_section"
    alpha0: float = 1.0
    beta: float = 0.5
    c1: float = 1e-4
    c2: float = 0.9
    tau1: float = 3.0
    tau2: float = 0.1
    tau3: float = 0.5
    max_ls_evals: int = 30
    objective_bound: float | None = None
    grad_inf_tol: float = 1e-10
    fidelity_delta_tol: float = 0.0
    fidelity_target: float | None = None
    max_iterations: int = 100

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}")
        if self.line_search not in LINE_SEARCHES:
            raise ValueError(f"line_search must be one of {LINE_SEARCHES}")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if not self.tau1 > 0 or not 0 < self.tau2 < self.tau3 <= 0.5:
            raise ValueError("need tau1 > 0 and 0 < tau2 < tau3 <= 0.5")
        if not self.rfo_zeta > 1 or not 0 < self.rfo_phi < 1:
            raise ValueError("need rfo_zeta > 1 and 0 < rfo_phi < 1")
        if not self.trm_delta > 0:
            raise ValueError("trm_delta must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("need 0 < beta < 1")
        if not 0 <= self.broyden_phi <= 1:
            raise ValueError("broyden_phi must lie in [0, 1]")
        if self.lbfgs_memory < 1 or self.max_ls_evals < 1:
            raise ValueError("lbfgs_memory and max_ls_evals must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.grad_inf_tol < 0 or self.fidelity_delta_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.line_search == "none" and self.method != "newton":
            raise ValueError("unit steps without a line search are only offered for Newton")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


class Evaluation(NamedTuple):
    objective: float
    gradient: np.ndarray
    hessian: np.ndarray | None = None
    fidelity: float | None = None
    penalty: float = 0.0
    extra: object = None


@dataclass
class TraceRow:
    iteration: int
    fidelity: float
    penalty: float
    objective: float
    grad_inf_norm: float
    step_length: float
    ls_evals: int
    reg_iters: int
    cond_number: float
    wall_ms: float


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRow))


@dataclass
class OptimizerTrace:
    rows: list = field(default_factory=list)
    status: str = "running"
    failed: bool = False
    message: str = ""
    counters: dict = field(default_factory=lambda: {"evaluations": 0, "gradients": 0,
                                                     "hessians": 0, "qn_skipped": 0})

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def __len__(self):
        return len(self.rows)


@dataclass
class OptimizeResult:
    x: np.ndarray
    evaluation: Evaluation
    trace: OptimizerTrace

    @property
    def failed(self) -> bool:
        return self.trace.failed


def maximize(fun: Callable, x0, config: OptimizerConfig, *, clock=time.perf_counter) -> OptimizeResult:
    """Maximize ``fun``.

    ``fun(x, order)`` returns an :class:`Evaluation`; ``order`` is 0
    (value only), 1 (value and gradient) or 2 (with Hessian). Failures
    inside a line search or regularizer end the run with ``trace.failed``
    set and the best point so far; they are never raised.
    """
    cfg = config
    newton = cfg.method == "newton"
    trace = OptimizerTrace()
    start = clock()

    def evaluate(x, order):
        ev = fun(x, order)
        trace.counters["evaluations"] += 1
        trace.counters["gradients"] += order >= 1
        trace.counters["hessians"] += order >= 2
        return ev

    def record(it, ev, alpha, ls, reg, cond):
        fid = ev.objective if ev.fidelity is None else ev.fidelity
        trace.rows.append(TraceRow(it, float(fid), float(ev.penalty), float(ev.objective),
                                   float(np.abs(ev.gradient).max()) if ev.gradient.size else 0.0,
                                   float(alpha), int(ls), int(reg), float(cond),
                                   (clock() - start) * 1e3))

    x = np.array(x0, dtype=float)
    ev = evaluate(x, 2 if newton else 1)
    record(0, ev, 0.0, 0, 0, math.nan)

    n = x.size
    B = np.eye(n)           # Hessian approximation of -F (direct updates)
    Binv = np.eye(n)        # inverse approximation
    scaled = False
    history = LBFGSHistory(cfg.lbfgs_memory)
    qn_stats: dict = {}
    alpha_prev = cfg.alpha0
    trace.status = "max-iterations"

    for it in range(1, cfg.max_iterations + 1):
        g = ev.gradient
        if np.abs(g).max() < cfg.grad_inf_tol:
            trace.status = "converged-gradient"
            break
        fid = ev.objective if ev.fidelity is None else ev.fidelity
        if cfg.fidelity_target is not None and fid >= cfg.fidelity_target:
            trace.status = "target-reached"
            break

        reg_iters, cond = 0, math.nan
        try:
            d, reg_iters, cond = _direction(cfg, ev, B, Binv, history)
        except (RegularizationError, np.linalg.LinAlgError) as err:
            trace.status, trace.failed, trace.message = "failed", True, f"regularization: {err}"
            break
        if not float(g @ d) > 0:
            # broken curvature model: restart from steepest ascent
            d = g.copy()
            B, Binv, scaled = np.eye(n), np.eye(n), False
            history = LBFGSHistory(cfg.lbfgs_memory)

        alpha0 = cfg.alpha0 if cfg.method != "gradient" else alpha_prev
        try:
            alpha, new_ev, ls_evals = _line_search(cfg, evaluate, x, d, ev, alpha0, newton)
        except LineSearchError as err:
            trace.status, trace.failed, trace.message = "failed", True, f"line search: {err}"
            break

        s = alpha * d
        x_new = x + s
        if newton and new_ev.hessian is None:
            new_ev = evaluate(x_new, 2)
        y = -(new_ev.gradient - g)

        if cfg.method == "sr1":
            B = sr1_update(B, s, y, qn_stats)
        elif cfg.method in ("bfgs", "dfp", "broyden"):
            phi = {"bfgs": 1.0, "dfp": 0.0}.get(cfg.method, cfg.broyden_phi)
            if not scaled and float(s @ y) > 0:
                gamma = float(s @ y) / float(y @ y)
                Binv, B, scaled = gamma * np.eye(n), np.eye(n) / gamma, True
            if cfg.inverse_update:
                Binv = inverse_broyden_update(Binv, s, y, phi, qn_stats)
            else:
                B = broyden_update(B, s, y, phi, qn_stats)
        elif cfg.method == "lbfgs":
            history.push(s, y)

        delta = new_ev.objective - ev.objective
        x, ev = x_new, new_ev
        alpha_prev = min(1e6, 2 * alpha)
        record(it, ev, alpha, ls_evals, reg_iters, cond)
        if cfg.fidelity_delta_tol > 0 and abs(delta) < cfg.fidelity_delta_tol:
            trace.status = "converged-delta"
            break
    else:
        g = ev.gradient
        if g.size and np.abs(g).max() < cfg.grad_inf_tol:
            trace.status = "converged-gradient"
        fid = ev.objective if ev.fidelity is None else ev.fidelity
        if cfg.fidelity_target is not None and fid >= cfg.fidelity_target:
            trace.status = "target-reached"

    trace.counters["qn_skipped"] = qn_stats.get("skipped", 0) + history.skipped
    return OptimizeResult(x, ev, trace)


def _regularized_solve(cfg, H, g):
    """Ascent direction from an objective Hessian (or curvature model) ``H``."""
    if cfg.regularizer == "rfo":
        res = rfo_regularize(H, g, cfg.rfo_zeta, cfg.rfo_phi)
        return res.direction, res.iterations, res.cond
    if cfg.regularizer == "cholesky":
        Hr, _, it = cholesky_regularize(H)
    elif cfg.regularizer == "trm":
        Hr, sigma = trm_regularize(H, cfg.trm_delta)
        it = int(sigma > 0)
    else:
        Hr, it = H, 0
    lam = np.linalg.eigvalsh(-Hr)
    cond = lam[-1] / lam[0] if lam[0] > 0 else math.inf
    return np.linalg.solve(-Hr, g), it, cond


def _direction(cfg, ev, B, Binv, history):
    g = ev.gradient
    m = cfg.method
    if m == "gradient":
        return g.copy(), 0, math.nan
    if m == "newton":
        return _regularized_solve(cfg, ev.hessian, g)
    if m == "lbfgs":
        return lbfgs_direction(history, g), 0, math.nan
    if m in ("bfgs", "dfp", "broyden") and cfg.inverse_update:
        return Binv @ g, 0, math.nan
    # direct curvature model of -F; regularize its negation like a Hessian
    if cfg.regularizer == "none":
        return np.linalg.solve(B, g), 0, math.nan
    return _regularized_solve(cfg, -B, g)


def _line_search(cfg, evaluate, x, d, ev, alpha0, newton):
    g = ev.gradient
    if cfg.line_search == "none":
        new = evaluate(x + d, 2)
        if new.objective >= ev.objective:
            return 1.0, new, 1
        # safeguard: fall back to Armijo backtracking when the unit step loses ground
        alpha, _, k = backtracking_search(lambda z: evaluate(z, 0).objective, x, d,
                                          ev.objective, g, cfg.beta, cfg.beta, cfg.c1)
        return alpha, evaluate(x + alpha * d, 2), k + 2
    if cfg.line_search == "backtracking":
        alpha, _, k = backtracking_search(lambda z: evaluate(z, 0).objective, x, d,
                                          ev.objective, g, alpha0, cfg.beta, cfg.c1)
        return alpha, evaluate(x + alpha * d, 2 if newton else 1), k

    def fg(z):
        e = evaluate(z, 1)
        return e.objective, e.gradient, e

    alpha, _, _, new, k = bracket_section_search(
        fg, x, d, ev.objective, g, alpha0, cfg.c1, cfg.c2, cfg.tau1, cfg.tau2, cfg.tau3,
        cfg.objective_bound, cfg.max_ls_evals)
    return alpha, new, k
