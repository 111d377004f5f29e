"""Checking analytic derivatives against finite differences.

Every fidelity kind gets the same treatment: the exact gradient and
Hessian at a random pulse are compared with five-point central differences,
block by block. The same check is available as ``newtongrape check``.
"""

import dataclasses

import numpy as np

from newtongrape import config as C
from newtongrape import grape as G
from newtongrape.cli.commands import derivative_errors

cfg = C.load_template("m2s")
base = C.build_members(cfg)[0][1]
controls = C.initial_controls(cfg)
columns = np.arange(0, controls.K * controls.N, 10)     # a sample of variables

for kind in G.FIDELITY_KINDS:
    problem = dataclasses.replace(base, kind=kind, commutes=base.commutes.copy())

    def f(x, order):
        b = G.evaluate(problem, controls.with_vector(x), order)
        return b.value, b.gradient, b.hessian
    errs = derivative_errors(f, controls.flatten(), 3e-5, controls.K, columns=columns)
    print(kind, "  ".join(f"{k} {v:.1e}" for k, v in errs.items()))
