"""Analytic gradients of the discrete objective and a central-difference oracle."""
from __future__ import annotations

import numpy as np

from .energy import (
    VELOCITY,
    EmpiricalTarget,
    EnergyTerms,
    ProblemSpec,
    TrajectoryField,
    check_mode,
    convolved_target,
    total_objective,
)


def _nonlocal_value_grad(y: np.ndarray, spec: ProblemSpec):
    """NE value and its gradient with respect to the terminal points y (N, D)."""
    k = spec.mollifier
    n = y.shape[0]
    eps = spec.epsilon
    inv_var = 1.0 / k.variance

    diff = y[:, None, :] - y[None, :, :]
    kyy = k.value(diff)
    # symmetric pair term: d/dy_i sum_{a,b} K(y_a - y_b) = 2 sum_k grad K(y_i - y_k)
    grad = (-2.0 * inv_var / (eps * n * n)) * np.einsum("ik,ikd->id", kyy, diff)
    self_sum = np.sum(kyy)

    target = spec.target
    if isinstance(target, EmpiricalTarget):
        if target.points.shape[0] != n:
            raise ValueError("empirical target must have as many points as particles")
        dw = y[:, None, :] - target.points[None, :, :]
        kyw = k.value(dw)
        value = (self_sum - 2.0 * np.sum(kyw)) / (eps * n * n)
        grad += (2.0 * inv_var / (eps * n * n)) * np.einsum("ik,ikd->id", kyw, dw)
    else:
        g = convolved_target(spec, y)
        var = target.variance + k.variance
        value = (self_sum / (n * n) - 2.0 * np.sum(g) / n) / eps
        grad += (2.0 / (eps * n * var)) * (y - target.mean) * g[:, None]
    return float(value), grad


def _obstacle_value_grad(y: np.ndarray, spec: ProblemSpec):
    obs = spec.obstacles
    n, m, _ = y.shape
    scale = obs.strength / (n * (m - 1))
    value = 0.0
    grad = np.zeros_like(y)
    for c, r in zip(obs.centers, obs.radii):
        diff = y - c
        viol = r * r - np.sum(diff * diff, axis=-1)
        inside = viol > 0
        value += np.sum(viol[inside])
        grad -= 2.0 * diff * inside[..., None]
    return float(scale * value), scale * grad


def value_and_gradient(traj: TrajectoryField, spec: ProblemSpec):
    """Return (EnergyTerms, gradient) in one pass; frozen-knot gradient entries are zero."""
    check_mode(traj, spec)
    return _value_and_gradient(traj.values, spec)


def _value_and_gradient(y: np.ndarray, spec: ProblemSpec):
    n, m, _ = y.shape
    grad = np.zeros_like(y)

    if spec.mode == VELOCITY:
        steps = y[:, 1:] - y[:, :-1]
        c = (m - 1) / n
        control = c * float(np.sum(steps * steps))
        grad[:, 1:] += 2.0 * c * steps
        grad[:, :-1] -= 2.0 * c * steps
        if spec.obstacles.active:
            potential, g_obs = _obstacle_value_grad(y, spec)
            grad += g_obs
        else:
            potential = 0.0
        if spec.nonlocal_enabled:
            nl, g_nl = _nonlocal_value_grad(y[:, -1, :], spec)
            grad[:, -1] += g_nl
        else:
            nl = 0.0
        frozen = 1
    else:
        dd = y[:, :-2] - 2.0 * y[:, 1:-1] + y[:, 2:]
        c = (m - 1) ** 3 / n
        control = c * float(np.sum(dd * dd))
        grad[:, :-2] += 2.0 * c * dd
        grad[:, 1:-1] -= 4.0 * c * dd
        grad[:, 2:] += 2.0 * c * dd
        potential = 0.0
        if spec.nonlocal_enabled:
            d = y.shape[2]
            phase = np.concatenate([y[:, -1], (y[:, -1] - y[:, -2]) * (m - 1)], axis=1)
            nl, g_phase = _nonlocal_value_grad(phase, spec)
            g_pos, g_vel = g_phase[:, :d], g_phase[:, d:]
            grad[:, -1] += g_pos + (m - 1) * g_vel
            grad[:, -2] -= (m - 1) * g_vel
        else:
            nl = 0.0
        frozen = 2

    grad[:, :frozen] = 0.0
    return EnergyTerms(control, potential, nl, control + potential + nl), grad


def objective_gradient(traj: TrajectoryField, spec: ProblemSpec) -> np.ndarray:
    return value_and_gradient(traj, spec)[1]


def default_fd_step(traj: TrajectoryField) -> float:
    return 1e-5 * (1.0 + float(np.max(np.abs(traj.values))))


def finite_difference_gradient(traj: TrajectoryField, spec: ProblemSpec, step=None) -> np.ndarray:
    """Central differences of total_objective over every free coordinate."""
    check_mode(traj, spec)
    if step is None:
        step = default_fd_step(traj)
    if not step > 0:
        raise ValueError("finite-difference step must be positive")
    work = traj.copy()
    x = work.values
    grad = np.zeros_like(x)
    n, m, d = x.shape
    for i in range(n):
        for j in range(traj.frozen_knots, m):
            for a in range(d):
                orig = x[i, j, a]
                x[i, j, a] = orig + step
                f_plus = total_objective(work, spec)
                x[i, j, a] = orig - step
                f_minus = total_objective(work, spec)
                x[i, j, a] = orig
                grad[i, j, a] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_gradient_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """max |g - g_ref| / (1 + max |g_ref|); frozen entries are zero in both and drop out."""
    return float(np.max(np.abs(analytic - reference)) / (1.0 + np.max(np.abs(reference))))
