"""Errors against an exact transport map and the log-log rate fit."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .energy import ObstacleSet, TrajectoryField

# exact_map(y0, t): y0 has shape (N, d) (the frozen initial knots, in particle
# order); returns the exact positions at time t, same shape.
ExactMap = Callable[[np.ndarray, float], np.ndarray]


@dataclass
class ErrorReport:
    error_all_times: float
    error_terminal: float


def error_all_times(traj: TrajectoryField, exact_map: ExactMap) -> float:
    y = traj.values
    n, m, _ = y.shape
    y0 = y[:, 0]
    sq = 0.0
    for j in range(1, m):
        diff = y[:, j] - exact_map(y0, j / (m - 1))
        sq += float(np.sum(diff * diff))
    return float(np.sqrt(sq / (n * (m - 1))))


def error_terminal(traj: TrajectoryField, exact_map: ExactMap) -> float:
    y = traj.values
    diff = y[:, -1] - exact_map(y[:, 0], 1.0)
    return float(np.sqrt(np.sum(diff * diff) / y.shape[0]))


def error_report(traj: TrajectoryField, exact_map: ExactMap) -> ErrorReport:
    return ErrorReport(error_all_times(traj, exact_map), error_terminal(traj, exact_map))


def chord_map(matched_targets) -> ExactMap:
    """Straight-line interpolation from each particle's source to its matched target.

    ``matched_targets[i]`` is the endpoint for particle ``i``.
    """
    w = np.asarray(matched_targets, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]

    def exact(y0, t):
        return (1.0 - t) * y0 + t * w

    return exact


def loglog_slope(points) -> float:
    """Least-squares slope of log(y) against log(x)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("need at least two (x, y) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("log-log fit needs finite, strictly positive values")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise ValueError("x values must not all coincide")
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def penetration_depth(traj: TrajectoryField, obs: ObstacleSet) -> float:
    """Deepest intrusion of any knot into any obstacle; 0 when every knot is outside."""
    depth = 0.0
    for c, r in zip(obs.centers, obs.radii):
        dist = np.linalg.norm(traj.values - c, axis=-1)
        depth = max(depth, float(np.max(r - dist)))
    return depth
