"""Pulse optimization: fidelity minus penalties over Cartesian or phase variables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import grape
from ..penalty import PenaltySpec, PhaseMap, total_penalty
from .driver import Evaluation, OptimizerConfig, OptimizeResult, maximize


class PulseObjective:
    """Callable objective for :func:`maximize` built from one problem or an ensemble.

    Variables are the flattened Cartesian amplitudes, or one phase per
    channel pair and slice when ``phase_map`` is given.
    """

    def __init__(self, members, template: grape.ControlSet, penalties: Sequence[PenaltySpec] = (),
                 phase_map: PhaseMap | None = None, threads: int | None = None):
        if isinstance(members, grape.ControlProblem):
            members = [(1.0, members)]
        self.members = list(members)
        for _, p in self.members:
            if p.kind == "J0":
                raise ValueError("J0 is complex-valued; optimize J1 or J2 instead")
        self.template = template
        self.penalties = list(penalties)
        self.phase_map = phase_map
        self.threads = threads
        self.last_members = None

    def controls(self, x) -> grape.ControlSet:
        if self.phase_map is not None:
            amps = self.phase_map.amplitudes(x, base=self.template.amplitudes)
            return grape.ControlSet(amps, self.template.dt, self.template.power)
        return self.template.with_vector(x)

    def variables(self, controls: grape.ControlSet) -> np.ndarray:
        if self.phase_map is not None:
            return self.phase_map.phases(controls.amplitudes)
        return controls.flatten()

    def bundle(self, controls, order):
        if len(self.members) == 1 and self.members[0][0] > 0:
            b = grape.evaluate(self.members[0][1], controls, order, threads=self.threads)
            b.members = [b.value]
            return b
        return grape.ensemble_evaluate(self.members, controls, order, threads=self.threads)

    def __call__(self, x, order: int = 1) -> Evaluation:
        c = self.controls(x)
        b = self.bundle(c, order)
        fid = float(np.real(b.value))
        self.last_members = b.members
        pen, pg, ph = total_penalty(self.penalties, c.amplitudes, hessian=order >= 2)
        if order == 0:
            return Evaluation(fid - pen, np.zeros(0), None, fid, pen, b)
        g = b.gradient - pg
        H = None if order < 2 else b.hessian - ph
        if self.phase_map is not None:
            amps = c.amplitudes
            if H is not None:
                H = self.phase_map.hessian(amps, g, H)
            g = self.phase_map.gradient(amps, g)
        return Evaluation(fid - pen, g, H, fid, pen, b)


@dataclass
class PulseResult:
    controls: grape.ControlSet
    variables: np.ndarray
    fidelity: float
    penalty: float
    trace: object
    member_values: list | None
    failed: bool


def optimize(members, controls: grape.ControlSet, config: OptimizerConfig,
             penalties: Sequence[PenaltySpec] = (), phase_map: PhaseMap | None = None,
             threads: int | None = None, clock=None) -> PulseResult:
    """Maximize fidelity minus penalties starting from ``controls``.

    ``members`` is a single :class:`~newtongrape.grape.ControlProblem` or a
    list of ``(weight, problem)`` pairs whose fidelities are averaged.
    """
    obj = PulseObjective(members, controls, penalties, phase_map, threads)
    x0 = obj.variables(controls)
    kw = {} if clock is None else {"clock": clock}
    res: OptimizeResult = maximize(obj, x0, config, **kw)
    final = obj.controls(res.x)
    ev = res.evaluation
    members_vals = None if ev.extra is None else ev.extra.members
    return PulseResult(final, res.x, float(ev.fidelity), float(ev.penalty), res.trace,
                       members_vals, res.failed)
