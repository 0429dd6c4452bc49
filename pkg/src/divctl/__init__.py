"""Optimal dividend and delayed-recapitalisation control of a Brownian surplus."""

from .model import BarrierSolution, InvalidParams, ModelParams, solve_barrier
from .thresholds import Regime, ThresholdSolution, solve_fixed_point
from .value import PiecewiseValue, assemble_value, bellman_verify

__version__ = "0.1.0"

__all__ = [
    "BarrierSolution",
    "InvalidParams",
    "ModelParams",
    "PiecewiseValue",
    "Regime",
    "ThresholdSolution",
    "__version__",
    "assemble_value",
    "bellman_verify",
    "solve_barrier",
    "solve_fixed_point",
]
