"""Initialization and plain gradient descent with plateau-based step reduction."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .energy import EnergyTerms, ProblemSpec, TargetMeasure, TrajectoryField, check_mode
from .gradients import _value_and_gradient

log = logging.getLogger(__name__)

# a step "decreases" the loss only if it beats the best value by more than this
IMPROVEMENT_SLACK = 1e-12


@dataclass
class OptimizerConfig:
    learning_rate: float
    max_steps: int
    lr_reduce_factor: float = 0.2
    lr_reduce_patience: int = 2
    lr_floor: float = 1e-8
    early_stop_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")
        if not 0 < self.lr_reduce_factor < 1:
            raise ValueError("lr_reduce_factor must lie in (0, 1)")
        if self.lr_reduce_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.lr_floor < 0:
            raise ValueError("lr_floor must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


class LossTrace:
    """Per-iteration loss decomposition; row 0 is the initial state."""

    columns = ("iter", "total", "kinetic_or_cc", "potential", "nonlocal", "lr")

    def __init__(self, capacity: int):
        self._data = np.empty((capacity, len(self.columns)))
        self._size = 0
        self.stopped_early = False

    def append(self, iteration: int, terms: EnergyTerms, lr: float) -> None:
        if self._size == len(self._data):
            self._data = np.concatenate([self._data, np.empty_like(self._data)])
        self._data[self._size] = (iteration, terms.total, terms.control, terms.potential, terms.nonlocal_, lr)
        self._size += 1

    def __len__(self):
        return self._size

    @property
    def array(self) -> np.ndarray:
        return self._data[: self._size]

    def column(self, name: str) -> np.ndarray:
        return self.array[:, self.columns.index(name)]

    @property
    def iterations(self) -> np.ndarray:
        return self.column("iter").astype(np.int64)

    @property
    def total(self) -> np.ndarray:
        return self.column("total")

    def best_index(self) -> int:
        return int(np.argmin(self.total))

    def record(self, index: int) -> dict:
        return dict(zip(self.columns, self.array[index].tolist()))


class OptimizationError(RuntimeError):
    """Loss or gradient became non-finite; carries the last finite iterate and the trace."""

    def __init__(self, message: str, traj: TrajectoryField, trace: LossTrace):
        super().__init__(message)
        self.traj = traj
        self.trace = trace


def _as_points(points, d: int) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(-1, d)
    if points.ndim != 2 or points.shape[1] != d:
        raise ValueError(f"expected points with {d} coordinates, got shape {points.shape}")
    return points


def init_straight_lines(sources, target: TargetMeasure, n_times: int) -> TrajectoryField:
    """Chords from each source to the target's center of mass."""
    if n_times < 2:
        raise ValueError("need at least two time knots")
    com = target.center_of_mass()
    z = _as_points(sources, com.shape[0])
    t = np.linspace(0.0, 1.0, n_times)[None, :, None]
    values = (1.0 - t) * z[:, None, :] + t * com[None, None, :]
    values[:, 0] = z
    values[:, -1] = com
    return TrajectoryField(values, frozen_knots=1)


def init_acceleration(sources, initial_velocities, target: TargetMeasure, n_times: int) -> TrajectoryField:
    """Knots 1-2 fixed by the initial position and velocity, the rest a chord to the position center of mass."""
    if n_times < 3:
        raise ValueError("acceleration control needs at least three time knots")
    com = target.center_of_mass()
    d = com.shape[0] // 2
    com = com[:d]
    z = _as_points(sources, d)
    v0 = _as_points(initial_velocities, d)
    if v0.shape != z.shape:
        raise ValueError("need one initial velocity per source")
    h = 1.0 / (n_times - 1)
    second = z + h * v0
    s = np.linspace(0.0, 1.0, n_times - 1)[None, :, None]
    tail = (1.0 - s) * second[:, None, :] + s * com[None, None, :]
    values = np.concatenate([z[:, None, :], tail], axis=1)
    values[:, 1] = second
    values[:, -1] = com
    return TrajectoryField(values, frozen_knots=2)


def gd_run(
    init: TrajectoryField,
    spec: ProblemSpec,
    cfg: OptimizerConfig,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
):
    """Gradient descent over free knots; returns the lowest-loss iterate and the trace.

    ``callback(iteration, values)`` is invoked after every recorded state; it
    must not modify ``values``.
    """
    check_mode(init, spec)
    frozen = init.frozen_knots
    x = init.values.copy()
    lr = cfg.learning_rate
    trace = LossTrace(min(cfg.max_steps, 1_000_000) + 1)

    with np.errstate(over="ignore", invalid="ignore"):
        terms, grad = _value_and_gradient(x, spec)
    if not _finite(terms, grad):
        raise OptimizationError("non-finite loss at initialization", init.copy(), trace)
    trace.append(0, terms, lr)
    if callback is not None:
        callback(0, x)

    best = terms.total
    best_x = x.copy()
    prev = x.copy()
    since_best = 0
    since_reduce = 0
    for it in range(1, cfg.max_steps + 1):
        prev[...] = x
        x[:, frozen:] -= lr * grad[:, frozen:]
        with np.errstate(over="ignore", invalid="ignore"):  # non-finite values are reported below
            terms, grad = _value_and_gradient(x, spec)
        if not _finite(terms, grad):
            raise OptimizationError(
                f"non-finite loss or gradient at step {it}", TrajectoryField(prev, frozen), trace
            )
        trace.append(it, terms, lr)
        if callback is not None:
            callback(it, x)

        if terms.total < best - IMPROVEMENT_SLACK:
            best = terms.total
            best_x[...] = x
            since_best = 0
            since_reduce = 0
            continue
        since_best += 1
        since_reduce += 1
        if since_best >= cfg.early_stop_patience:
            trace.stopped_early = True
            log.info("early stop at step %d (loss %.6g)", it, best)
            break
        if since_reduce >= cfg.lr_reduce_patience:
            reduced = lr * cfg.lr_reduce_factor
            if reduced >= cfg.lr_floor:
                lr = reduced
                log.debug("step %d: learning rate reduced to %.3g", it, lr)
            since_reduce = 0

    return TrajectoryField(best_x, frozen), trace


def _finite(terms: EnergyTerms, grad: np.ndarray) -> bool:
    return bool(np.isfinite(terms.total) and np.all(np.isfinite(grad)))
