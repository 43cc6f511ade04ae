"""Discrete objective for the particle approximation.

Trajectories are stored as an ``(N, M, d)`` array: particle ``i``, time knot
``j`` (``t = j h``, ``h = 1/(M-1)``), spatial coordinate. The leading
``frozen_knots`` columns hold initial data and never move.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .kernels import Mollifier, gaussian_cross_term, gaussian_density

VELOCITY = "velocity"
ACCELERATION = "acceleration"
MODES = (VELOCITY, ACCELERATION)


@dataclass(eq=False)
class TrajectoryField:
    values: np.ndarray
    frozen_knots: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"trajectory values must have shape (N, M, d), got {self.values.shape}")
        n, m, d = self.values.shape
        if n < 1 or d < 1:
            raise ValueError("need at least one particle and one coordinate")
        if self.frozen_knots not in (1, 2):
            raise ValueError("frozen_knots must be 1 (velocity) or 2 (acceleration)")
        if m < 2 or (self.frozen_knots == 2 and m < 3):
            raise ValueError(f"too few time knots ({m}) for frozen_knots={self.frozen_knots}")

    @property
    def n_particles(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def h(self) -> float:
        return 1.0 / (self.n_times - 1)

    @property
    def mode(self) -> str:
        return VELOCITY if self.frozen_knots == 1 else ACCELERATION

    @property
    def sources(self) -> np.ndarray:
        return self.values[:, 0, :]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1, :]

    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_times)

    def copy(self) -> "TrajectoryField":
        return TrajectoryField(self.values.copy(), self.frozen_knots)


@dataclass(eq=False)
class EmpiricalTarget:
    """Equal-weight point cloud target."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.points.shape[0] < 1:
            raise ValueError("empirical target needs at least one point")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def center_of_mass(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass(eq=False)
class GaussianTarget:
    """Isotropic Gaussian N(mean, std^2 I)."""

    mean: np.ndarray
    std: float

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        if not self.std > 0:
            raise ValueError("Gaussian target std must be positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def variance(self) -> float:
        return self.std * self.std

    def center_of_mass(self) -> np.ndarray:
        return self.mean.copy()


TargetMeasure = Union[EmpiricalTarget, GaussianTarget]


@dataclass(eq=False)
class ObstacleSet:
    """Union of open balls, penalized by strength * sum_k max(r_k^2 - |y - c_k|^2, 0)."""

    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    strength: float = 0.0

    def __post_init__(self):
        self.radii = np.atleast_1d(np.asarray(self.radii, dtype=np.float64))
        centers = np.asarray(self.centers, dtype=np.float64)
        self.centers = centers.reshape(len(self.radii), centers.shape[-1] if centers.ndim else 1)
        if self.strength < 0:
            raise ValueError("obstacle strength must be nonnegative")
        if np.any(self.radii <= 0):
            raise ValueError("obstacle radii must be positive")

    @property
    def active(self) -> bool:
        return self.strength > 0 and len(self.radii) > 0

    def __len__(self):
        return len(self.radii)


def default_obstacle_strength(n_times: int, epsilon: float) -> float:
    """c_Omega = (h * epsilon)^(-1)."""
    return (n_times - 1) / epsilon


@dataclass(eq=False)
class ProblemSpec:
    mode: str
    epsilon: float
    mollifier: Mollifier
    target: TargetMeasure
    obstacles: ObstacleSet = field(default_factory=ObstacleSet)
    initial_velocities: Optional[np.ndarray] = None
    nonlocal_enabled: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.target.dim != self.mollifier.dim:
            raise ValueError(
                f"target dimension {self.target.dim} does not match mollifier dimension {self.mollifier.dim}"
            )
        if self.mode == ACCELERATION:
            if self.mollifier.dim % 2:
                raise ValueError("acceleration mode needs an even phase-space dimension")
            if self.obstacles.active:
                raise ValueError("obstacles are only supported in velocity mode")
            if self.initial_velocities is not None:
                self.initial_velocities = np.atleast_2d(np.asarray(self.initial_velocities, dtype=np.float64))
        if self.obstacles.active and self.obstacles.centers.shape[1] != self.mollifier.dim:
            raise ValueError("obstacle centers must live in the trajectory space")

    @property
    def frozen_knots(self) -> int:
        return 1 if self.mode == VELOCITY else 2

    @property
    def space_dim(self) -> int:
        return self.mollifier.dim if self.mode == VELOCITY else self.mollifier.dim // 2


class EnergyTerms(NamedTuple):
    control: float  # KE in velocity mode, CC in acceleration mode
    potential: float
    nonlocal_: float
    total: float


def check_mode(traj: TrajectoryField, spec: ProblemSpec) -> None:
    if traj.frozen_knots != spec.frozen_knots:
        raise ValueError(f"trajectory ({traj.mode}) and problem ({spec.mode}) modes disagree")
    if traj.dim != spec.space_dim:
        raise ValueError(f"trajectory dimension {traj.dim} does not match problem dimension {spec.space_dim}")


def kinetic_energy(traj: TrajectoryField) -> float:
    y = traj.values
    steps = y[:, 1:] - y[:, :-1]
    return float((traj.n_times - 1) / traj.n_particles * np.sum(steps * steps))


def control_cost_acceleration(traj: TrajectoryField) -> float:
    x = traj.values
    m = traj.n_times
    if m < 3:
        raise ValueError("control cost needs at least three time knots")
    dd = x[:, :-2] - 2.0 * x[:, 1:-1] + x[:, 2:]
    return float((m - 1) ** 3 / traj.n_particles * np.sum(dd * dd))


def obstacle_cost(points: np.ndarray, obs: ObstacleSet) -> np.ndarray:
    """Pointwise L(y) for points of shape (..., d)."""
    out = np.zeros(points.shape[:-1])
    if not obs.active:
        return out
    for c, r in zip(obs.centers, obs.radii):
        diff = points - c
        out += np.maximum(r * r - np.sum(diff * diff, axis=-1), 0.0)
    return obs.strength * out


def potential_energy(traj: TrajectoryField, obs: ObstacleSet) -> float:
    if not obs.active:
        return 0.0
    # every knot counts, including the frozen one, with normalizer N (M - 1)
    total = np.sum(obstacle_cost(traj.values, obs))
    return float(total / (traj.n_particles * (traj.n_times - 1)))


def phase_terminal(traj: TrajectoryField) -> np.ndarray:
    """Terminal (position, backward-difference velocity) pairs, shape (N, 2d)."""
    x = traj.values
    v = (x[:, -1] - x[:, -2]) * (traj.n_times - 1)
    return np.concatenate([x[:, -1], v], axis=1)


def terminal_points(traj: TrajectoryField, spec: ProblemSpec) -> np.ndarray:
    return traj.terminal if spec.mode == VELOCITY else phase_terminal(traj)


def _check_terminal(terminal, spec: ProblemSpec) -> np.ndarray:
    terminal = np.atleast_2d(np.asarray(terminal, dtype=np.float64))
    if terminal.shape[1] != spec.mollifier.dim:
        raise ValueError(
            f"terminal points have dimension {terminal.shape[1]}, mollifier expects {spec.mollifier.dim}"
        )
    if isinstance(spec.target, EmpiricalTarget) and spec.target.points.shape[0] != terminal.shape[0]:
        raise ValueError(
            f"empirical target has {spec.target.points.shape[0]} points but there are {terminal.shape[0]} particles"
        )
    return terminal


def convolved_target(spec: ProblemSpec, points: np.ndarray) -> np.ndarray:
    """(K_delta * m1)(y) for a Gaussian target: N(mean, (sigma^2 + delta^2) I) density."""
    target = spec.target
    return gaussian_density(points, target.mean, target.variance + spec.mollifier.variance)


def nonlocal_energy(terminal, spec: ProblemSpec) -> float:
    """Terminal penalty without the target self-interaction constant (may be negative)."""
    y = _check_terminal(terminal, spec)
    n = y.shape[0]
    k = spec.mollifier
    self_sum = np.sum(k.value(y[:, None, :] - y[None, :, :]))
    if isinstance(spec.target, EmpiricalTarget):
        w = spec.target.points
        cross = np.sum(k.value(y[:, None, :] - w[None, :, :]))
        return float((self_sum - 2.0 * cross) / (spec.epsilon * n * n))
    cross = np.sum(convolved_target(spec, y))
    return float((self_sum / (n * n) - 2.0 * cross / n) / spec.epsilon)


def penalty_constant(spec: ProblemSpec) -> float:
    """C_{delta, m1} / epsilon, the terminal-point independent part of the full penalty."""
    k = spec.mollifier
    target = spec.target
    if isinstance(target, EmpiricalTarget):
        w = target.points
        c = np.sum(k.value(w[:, None, :] - w[None, :, :])) / (len(w) ** 2)
    else:
        c = gaussian_cross_term(k, target.mean, target.variance, target.mean, target.variance)
    return float(c / spec.epsilon)


def terminal_penalty_full(terminal, spec: ProblemSpec) -> float:
    """(1/eps) ||k_delta * mu_N - k_delta * m1||^2, clipped at zero against rounding."""
    return max(nonlocal_energy(terminal, spec) + penalty_constant(spec), 0.0)


def energy_terms(traj: TrajectoryField, spec: ProblemSpec) -> EnergyTerms:
    check_mode(traj, spec)
    if spec.mode == VELOCITY:
        control = kinetic_energy(traj)
        potential = potential_energy(traj, spec.obstacles)
    else:
        control = control_cost_acceleration(traj)
        potential = 0.0
    nl = nonlocal_energy(terminal_points(traj, spec), spec) if spec.nonlocal_enabled else 0.0
    return EnergyTerms(control, potential, nl, control + potential + nl)


def total_objective(traj: TrajectoryField, spec: ProblemSpec) -> float:
    return energy_terms(traj, spec).total


def full_objective(traj: TrajectoryField, spec: ProblemSpec) -> float:
    """Objective with the dropped constant restored, so the terminal term is nonnegative."""
    value = total_objective(traj, spec)
    if spec.nonlocal_enabled:
        value += penalty_constant(spec)
    return value

