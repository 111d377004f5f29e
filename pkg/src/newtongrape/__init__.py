"""Newton-GRAPE optimal control for spin systems in Liouville space."""

from . import config, grape, matexp, optim, penalty, spinop
from .grape import (ClosedSystem, ControlProblem, ControlSet, DerivativeBundle,
                    ensemble_evaluate, fidelity, gradient, hessian, slice_propagator,
                    trajectories)
from .optim import OptimizerConfig, optimize

__version__ = "0.1.0"

__all__ = [
    "config", "grape", "matexp", "optim", "penalty", "spinop",
    "ClosedSystem", "ControlProblem", "ControlSet", "DerivativeBundle", "ensemble_evaluate",
    "fidelity", "gradient", "hessian", "slice_propagator", "trajectories",
    "OptimizerConfig", "optimize",
]
