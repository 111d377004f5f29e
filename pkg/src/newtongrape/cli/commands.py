"""Implementations behind the ``run``, ``check`` and ``export`` subcommands."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import config as C
from .. import grape
from ..optim import PulseObjective, optimize
from .report import (ReportFiles, load_bundle, save_bundle, summary_text, write_convergence,
                     write_trajectory, write_waveform)

EXIT_OK, EXIT_CONFIG, EXIT_FAILED, EXIT_IO = 0, 1, 2, 3

GRAD_TOL = 1e-6
HESS_TOL = 1e-5
BLOCKS = ("gradient", "hessian_diagonal", "hessian_block_diagonal", "hessian_off_diagonal")


def nominal_problem(cfg: C.RunConfig) -> grape.ControlProblem:
    """The problem without ensemble perturbations, used for state trajectories."""
    return C.build_members(dataclasses.replace(cfg, ensemble=C.EnsembleConfig()))[0][1]


def _labels(cfg: C.RunConfig):
    grid = cfg.ensemble.grid()
    total = sum(w for w, _, _ in grid)
    return [(f, off) for _, f, off in grid], [w / total for w, _, _ in grid]


def export_report(cfg: C.RunConfig, controls: grape.ControlSet, variables, trace, fidelity, penalty,
                  members, out_dir, config_text: str | None = None, bundle: bool = True,
                  threads: int | None = None) -> ReportFiles:
    """Write every report file for a finished run into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    o = cfg.output
    files = ReportFiles(out / o.convergence, out / o.waveform, out / o.trajectory, out / o.summary,
                        out / o.bundle if bundle else None)
    write_convergence(files.convergence, trace, o.wall_time)
    write_waveform(files.waveform, controls, cfg.problem.controls, cfg.problem.pairs())
    fwd, _ = grape.trajectories(nominal_problem(cfg), controls, threads=threads)
    write_trajectory(files.trajectory, fwd, controls.dt)
    labels, weights = _labels(cfg)
    files.summary.write_text(summary_text(trace.status, trace.failed, trace.message, trace, members,
                                          labels, weights, fidelity, penalty))
    if bundle:
        save_bundle(files.bundle, config_text or cfg.dumps(), controls, variables, trace,
                    fidelity, penalty, members)
    return files


@dataclass
class RunOutcome:
    exit_code: int
    files: ReportFiles
    result: object


def run(cfg: C.RunConfig, seed: int | None = None, threads: int | None = None,
        out_dir=None) -> RunOutcome:
    """Optimize from seeded random controls and write the reports."""
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    members = C.build_members(cfg)
    controls = C.initial_controls(cfg)
    res = optimize(members, controls, cfg.optimizer, cfg.penalties, C.phase_map(cfg), threads)
    files = export_report(cfg, res.controls, res.variables, res.trace, res.fidelity, res.penalty,
                          res.member_values, out_dir or cfg.output.dir, threads=threads)
    return RunOutcome(EXIT_FAILED if res.failed else EXIT_OK, files, res)


def export(bundle_path, out_dir=None, threads: int | None = None) -> ReportFiles:
    """Re-emit the reports of a saved run."""
    saved = load_bundle(bundle_path)
    cfg = C.parse_config(saved.config_text)
    members = saved.members if saved.members.size else None
    return export_report(cfg, saved.controls, saved.variables, saved.trace, saved.fidelity,
                         saved.penalty, members, out_dir or Path(bundle_path).parent,
                         config_text=saved.config_text, bundle=out_dir is not None,
                         threads=threads)


# --- derivative check --------------------------------------------------------------

def _relative_error(analytic, fd) -> float:
    analytic, fd = np.asarray(analytic), np.asarray(fd)
    if fd.size == 0:
        return 0.0
    scale = np.abs(fd) + 1e-3 * np.abs(fd).max()
    scale[scale == 0] = 1.0
    return float((np.abs(analytic - fd) / scale).max())


def objective_function(cfg: C.RunConfig, threads: int | None = None):
    """``f(x, order) -> (value, gradient, hessian)`` in the optimizer's variables.

    J0 is complex and is differentiated directly over Cartesian amplitudes;
    the real kinds go through the full objective including penalties and
    the phase transform.
    """
    members = C.build_members(cfg)
    controls = C.initial_controls(cfg)
    if cfg.problem.fidelity == "J0":
        if cfg.problem.phase_only:
            raise C.ConfigError("derivative checks of J0 need Cartesian controls")

        def f(x, order):
            b = grape.ensemble_evaluate(members, controls.with_vector(x), order, threads)
            return b.value, b.gradient, b.hessian
        return f, controls.flatten()
    obj = PulseObjective(members, controls, cfg.penalties, C.phase_map(cfg), threads)

    def f(x, order):
        ev = obj(x, order)
        return ev.objective, ev.gradient, ev.hessian
    return f, obj.variables(controls)


def derivative_errors(f, x, h: float, K: int, phase_pairs: int = 0, columns=None,
                      points: int = 5) -> dict:
    """Maximum relative error per derivative block against central differences.

    ``points`` selects the three- or five-point central stencil. ``columns``
    restricts the comparison to a subset of variables, ordered slice-major
    with ``K`` per slice.
    """
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    if points not in (3, 5):
        raise ValueError("points must be 3 or 5")
    x = np.asarray(x, dtype=float)
    n = x.size
    _, g, H = f(x, 2)
    cols = np.arange(n) if columns is None else np.asarray(columns)
    fd_g = np.empty(len(cols), dtype=g.dtype)
    fd_H = np.empty((n, len(cols)), dtype=H.dtype)
    weights = {3: ((1, 1.0 / 2),), 5: ((1, 2.0 / 3), (2, -1.0 / 12))}[points]
    for i, c in enumerate(cols):
        e = np.zeros(n)
        e[c] = h
        dv, dg = 0.0, 0.0
        for m, w in weights:
            vp, gp, _ = f(x + m * e, 1)
            vm, gm, _ = f(x - m * e, 1)
            dv = dv + w * (vp - vm)
            dg = dg + w * (gp - gm)
        fd_g[i] = dv / h
        fd_H[:, i] = dg / h
    slices = np.arange(n) // K
    rows = np.arange(n)[:, None]
    same_slice = slices[:, None] == slices[cols][None, :]
    diag = rows == cols[None, :]
    out = {"gradient": _relative_error(g[cols], fd_g)}
    A = H[:, cols]
    scale_all = np.abs(fd_H).max() if fd_H.size else 0.0
    for name, mask in (("hessian_diagonal", diag),
                       ("hessian_block_diagonal", same_slice & ~diag),
                       ("hessian_off_diagonal", ~same_slice)):
        a, b = A[mask], fd_H[mask]
        if b.size == 0:
            out[name] = 0.0
            continue
        scale = np.abs(b) + 1e-3 * scale_all
        scale[scale == 0] = 1.0
        out[name] = float((np.abs(a - b) / scale).max())
    return out


def check_derivatives(cfg: C.RunConfig, h: float = 1e-5, seed: int | None = None,
                      threads: int | None = None, columns=None):
    """Returns ``(errors, passed)``; see :func:`derivative_errors`."""
    if not h > 0:
        raise C.ConfigError("finite-difference step h must be positive")
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    f, x = objective_function(cfg, threads)
    K = len(cfg.problem.pairs()) if cfg.problem.phase_only else len(cfg.problem.controls)
    errs = derivative_errors(f, x, h, K, columns=columns)
    passed = errs["gradient"] < GRAD_TOL and all(errs[b] < HESS_TOL for b in BLOCKS[1:])
    return errs, passed
