"""Switching-time optimal control for switched nonlinear systems.

An inner SLQ solver handles fixed switching times; an outer Frank-Wolfe
loop moves the switching times using sensitivity-based gradients.

The functions ``gradient`` and ``rollout`` share their module names and are
imported from the submodules directly.
"""
from .benchmarks import BenchmarkDefinition, UnknownBenchmark, available, builtin
from .gradient import GradientSettings, fd_gradient_oracle, switch_indicator
from .kernels import BACKEND
from .lq import LqModel, linearize
from .outer import OuterSettings, SolutionBag, fw_linear_minimizer, fw_step, ocs2_solve, warm_start_lookup
from .problem import (
    NormalizedGrid,
    SubsystemModel,
    SwitchedProblem,
    TerminalCost,
    map_z_to_t,
    mode_durations,
    polytope_vertices,
    validate_problem,
)
from .rollout import SlqPolicy, Trajectory, evaluate_cost, initial_controller
from .slq import SlqSettings, slq_solve, solve_riccati

__all__ = [
    "BACKEND",
    "BenchmarkDefinition",
    "GradientSettings",
    "LqModel",
    "NormalizedGrid",
    "OuterSettings",
    "SlqPolicy",
    "SlqSettings",
    "SolutionBag",
    "SubsystemModel",
    "SwitchedProblem",
    "TerminalCost",
    "Trajectory",
    "UnknownBenchmark",
    "available",
    "builtin",
    "evaluate_cost",
    "fd_gradient_oracle",
    "fw_linear_minimizer",
    "fw_step",
    "initial_controller",
    "linearize",
    "map_z_to_t",
    "mode_durations",
    "ocs2_solve",
    "polytope_vertices",
    "slq_solve",
    "solve_riccati",
    "switch_indicator",
    "validate_problem",
    "warm_start_lookup",
]

__version__ = "0.1.0"
