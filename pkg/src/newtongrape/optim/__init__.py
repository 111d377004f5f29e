from .driver import (Evaluation, OptimizeResult, OptimizerConfig, OptimizerTrace, TraceRow,
                     TRACE_COLUMNS, maximize)
from .linesearch import LineSearchError, backtracking_search, bracket_section_search
from .pulse import PulseObjective, PulseResult, optimize
from .quasinewton import (LBFGSHistory, broyden_update, inverse_broyden_update,
                          lbfgs_direction, sr1_update)
from .regularize import (RFOResult, RegularizationError, cholesky_regularize,
                         is_negative_definite, rfo_regularize, trm_regularize)

__all__ = [
    "Evaluation", "OptimizeResult", "OptimizerConfig", "OptimizerTrace", "TraceRow",
    "TRACE_COLUMNS", "maximize", "LineSearchError", "backtracking_search",
    "bracket_section_search", "PulseObjective", "PulseResult", "optimize", "LBFGSHistory",
    "broyden_update", "inverse_broyden_update", "lbfgs_direction", "sr1_update", "RFOResult",
    "RegularizationError", "cholesky_regularize", "is_negative_definite", "rfo_regularize",
    "trm_regularize",
]
