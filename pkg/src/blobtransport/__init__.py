"""Regularized particle ("blob") method for mean-field optimal control."""

__version__ = "0.1.0"

from .energy import (  # noqa: E402
    ACCELERATION,
    VELOCITY,
    EmpiricalTarget,
    EnergyTerms,
    GaussianTarget,
    ObstacleSet,
    ProblemSpec,
    TrajectoryField,
    energy_terms,
    full_objective,
    nonlocal_energy,
    terminal_penalty_full,
    total_objective,
)
from .gradients import finite_difference_gradient, objective_gradient, value_and_gradient  # noqa: E402
from .kernels import Mollifier, delta_from_n  # noqa: E402
from .metrics import error_all_times, error_terminal, loglog_slope, penetration_depth  # noqa: E402
from .optimize import OptimizerConfig, gd_run, init_acceleration, init_straight_lines  # noqa: E402
from .oracle import brute_force_assign, continuum_geodesic, hungarian_assign, monotone_map_1d  # noqa: E402

__all__ = [
    "ACCELERATION",
    "VELOCITY",
    "EmpiricalTarget",
    "EnergyTerms",
    "GaussianTarget",
    "Mollifier",
    "ObstacleSet",
    "OptimizerConfig",
    "ProblemSpec",
    "TrajectoryField",
    "brute_force_assign",
    "continuum_geodesic",
    "delta_from_n",
    "energy_terms",
    "error_all_times",
    "error_terminal",
    "finite_difference_gradient",
    "full_objective",
    "gd_run",
    "hungarian_assign",
    "init_acceleration",
    "init_straight_lines",
    "loglog_slope",
    "monotone_map_1d",
    "nonlocal_energy",
    "objective_gradient",
    "penetration_depth",
    "terminal_penalty_full",
    "total_objective",
    "value_and_gradient",
]
