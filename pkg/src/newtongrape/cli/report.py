"""Report artifacts: CSV files, plain-text summary and the reloadable bundle."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import grape
from ..optim import TRACE_COLUMNS, OptimizerTrace, TraceRow
from ..penalty import to_polar


@dataclass
class ReportFiles:
    convergence: Path
    waveform: Path
    trajectory: Path
    summary: Path
    bundle: Path | None = None


def fmt(x) -> str:
    """Shortest round-trip text for a float; integers stay integers."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_convergence(path, trace: OptimizerTrace, wall_time: bool = False):
    rows = []
    for r in trace.rows:
        vals = [getattr(r, c) for c in TRACE_COLUMNS]
        if not wall_time:
            vals[-1] = 0.0
        rows.append(vals)
    _write_csv(Path(path), TRACE_COLUMNS, rows)


def write_waveform(path, controls: grape.ControlSet, names, pairs):
    amps = controls.amplitudes * controls.power   # rad/s
    header = ["slice_index", "time_s"] + [f"amp[{n}]" for n in names]
    polar = []
    for a, b in pairs:
        r, phi = to_polar(amps[a], amps[b])
        polar += [r, phi]
        header += [f"r[{names[a]}/{names[b]}]", f"phi[{names[a]}/{names[b]}]"]
    rows = []
    for s in range(controls.N):
        rows.append([s, s * controls.dt] + [amps[k, s] for k in range(controls.K)]
                    + [col[s] for col in polar])
    _write_csv(Path(path), header, rows)


def write_trajectory(path, forward: np.ndarray, dt: float):
    """Squared magnitudes of every component of the forward states, one row per time point."""
    Q, n_points, dim = forward.shape
    if Q == 1:
        header = [f"rho[{i}]" for i in range(dim)]
    else:
        header = [f"rho{q}[{i}]" for q in range(Q) for i in range(dim)]
    mags = np.abs(forward) ** 2
    rows = [[n, n * dt] + list(mags[:, n, :].ravel()) for n in range(n_points)]
    _write_csv(Path(path), ["slice_index", "time_s"] + header, rows)


def summary_text(status, failed, message, trace: OptimizerTrace, members, labels, weights,
                 fidelity, penalty) -> str:
    lines = [f"status: {status}", f"failed: {str(bool(failed)).lower()}"]
    if message:
        lines.append(f"message: {message}")
    lines += [f"iterations: {max(len(trace) - 1, 0)}",
              f"fidelity: {fmt(fidelity)}",
              f"penalty: {fmt(penalty)}",
              f"objective: {fmt(fidelity - penalty)}"]
    steps = [r.step_length for r in trace.rows[1:]]
    if steps:
        lines.append("final step lengths: " + " ".join(fmt(a) for a in steps[-5:]))
    if members is not None:
        lines.append("members (weight, power factor, offset Hz, fidelity):")
        for w, (f, off), v in zip(weights, labels, members):
            lines.append(f"  {fmt(w)} {fmt(f)} {fmt(off)} {fmt(float(np.real(v)))}")
        mean = sum(w * float(np.real(v)) for w, v in zip(weights, members))
        lines.append(f"weighted mean fidelity: {fmt(mean)}")
    return "\n".join(lines) + "\n"


def save_bundle(path, config_text: str, controls: grape.ControlSet, variables, trace: OptimizerTrace,
                fidelity, penalty, members):
    cols = {f"trace_{c}": trace.column(c) for c in TRACE_COLUMNS}
    np.savez(Path(path), config=np.array(config_text), amplitudes=controls.amplitudes,
             dt=controls.dt, power=controls.power, variables=np.asarray(variables, dtype=float),
             status=np.array(trace.status), failed=trace.failed, message=np.array(trace.message),
             fidelity=float(fidelity), penalty=float(penalty),
             members=np.array([] if members is None else np.real(members), dtype=float), **cols)


@dataclass
class SavedRun:
    config_text: str
    controls: grape.ControlSet
    variables: np.ndarray
    trace: OptimizerTrace
    fidelity: float
    penalty: float
    members: np.ndarray


def load_bundle(path) -> SavedRun:
    with np.load(Path(path), allow_pickle=False) as z:
        controls = grape.ControlSet(z["amplitudes"], float(z["dt"]), float(z["power"]))
        cols = {c: z[f"trace_{c}"] for c in TRACE_COLUMNS}
        rows = []
        for i in range(len(cols["iteration"])):
            vals = {c: cols[c][i] for c in TRACE_COLUMNS}
            rows.append(TraceRow(int(vals["iteration"]), *(float(vals[c]) for c in TRACE_COLUMNS[1:6]),
                                 int(vals["ls_evals"]), int(vals["reg_iters"]),
                                 float(vals["cond_number"]), float(vals["wall_ms"])))
        trace = OptimizerTrace(rows, str(z["status"]), bool(z["failed"]), str(z["message"]))
        return SavedRun(str(z["config"]), controls, z["variables"], trace, float(z["fidelity"]),
                        float(z["penalty"]), z["members"])
