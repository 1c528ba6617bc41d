"""Distributionally robust strategy synthesis for switched stochastic systems.

Grid abstractions turn a switched system with additive noise into a robust
MDP whose rows range over a Wasserstein ball around interval-bounded nominal
rows; robust value iteration then yields lower and upper reach-avoid bounds
and a switching strategy.
"""

from .abstraction import build_abstraction, cost_matrix, image_box, nominal_bounds
from .inner import (InnerProblem, imdp_inner_max, imdp_inner_min, inner_max_dual,
                    inner_max_lp, inner_min_dual, inner_min_lp, membership_test)
from .model import (AffineMode, AmbiguitySet, Box, EmpiricalNoise, InputError,
                    MarkovianStrategy, ModelError, Partition, RobustAbstraction,
                    StationaryStrategy, SwitchedSystem, TruncatedGaussianNoise)
from .synthesis import (ConvergenceError, SynthesisResult, TimeLimitError, e_avg, refine,
                        value_iteration)
from .validation import make_test_distribution, simulate, wilson_interval

__version__ = "0.1.0"

__all__ = [
    "AffineMode", "AmbiguitySet", "Box", "ConvergenceError", "EmpiricalNoise", "InnerProblem",
    "InputError", "MarkovianStrategy", "ModelError", "Partition", "RobustAbstraction",
    "StationaryStrategy", "SwitchedSystem", "SynthesisResult", "TimeLimitError",
    "TruncatedGaussianNoise", "build_abstraction", "cost_matrix", "e_avg", "image_box",
    "imdp_inner_max", "imdp_inner_min", "inner_max_dual", "inner_max_lp", "inner_min_dual",
    "inner_min_lp", "make_test_distribution", "membership_test", "nominal_bounds", "refine",
    "simulate", "value_iteration", "wilson_interval",
]
