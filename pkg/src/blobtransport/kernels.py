"""Gaussian mollifiers and closed-form Gaussian convolution integrals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_DELTA_EXPONENT = 0.99


@dataclass(frozen=True)
class Mollifier:
    """Isotropic Gaussian kernel with standard deviation ``delta`` on R^dim.

    ``K_delta = k_delta * k_delta`` where ``k_delta`` is :meth:`half`.
    """

    delta: float
    dim: int

    def __post_init__(self):
        if not self.delta > 0 or not math.isfinite(self.delta):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")

    @property
    def variance(self) -> float:
        return self.delta * self.delta

    @property
    def peak(self) -> float:
        """Value at the origin, (2 pi delta^2)^(-dim/2)."""
        return (2.0 * math.pi * self.variance) ** (-self.dim / 2.0)

    def half(self) -> "Mollifier":
        """The convolution square root k_delta = K_{delta / sqrt 2}."""
        return Mollifier(self.delta / math.sqrt(2.0), self.dim)

    def value(self, theta: np.ndarray) -> np.ndarray:
        """Kernel evaluated along the last axis of ``theta`` (shape ``(..., dim)``)."""
        theta = _check_last_axis(theta, self.dim)
        sq = np.sum(theta * theta, axis=-1)
        return self.peak * np.exp(-sq / (2.0 * self.variance))

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        theta = _check_last_axis(theta, self.dim)
        return -(theta / self.variance) * self.value(theta)[..., None]


def _check_last_axis(theta, dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 0 or theta.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {theta.shape}")
    return theta


def kernel_value(m: Mollifier, theta) -> float:
    theta = _check_last_axis(theta, m.dim)
    if theta.ndim != 1:
        raise ValueError("kernel_value takes a single vector; use Mollifier.value for batches")
    return float(m.value(theta))


def kernel_gradient(m: Mollifier, theta) -> np.ndarray:
    theta = _check_last_axis(theta, m.dim)
    if theta.ndim != 1:
        raise ValueError("kernel_gradient takes a single vector; use Mollifier.gradient for batches")
    return m.gradient(theta)


def gaussian_density(x, mean, var: float) -> np.ndarray:
    """Density of N(mean, var * I) along the last axis of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    d = mean.shape[-1]
    _check_last_axis(x, d)
    diff = x - mean
    sq = np.sum(diff * diff, axis=-1)
    return (2.0 * math.pi * var) ** (-d / 2.0) * np.exp(-sq / (2.0 * var))


def gaussian_cross_term(m: Mollifier, mean_a, var_a: float, mean_b, var_b: float) -> float:
    """Integral of (K_delta * mu) against nu for mu = N(mean_a, var_a I), nu = N(mean_b, var_b I).

    A variance of zero stands for a Dirac mass.
    """
    if var_a < 0 or var_b < 0:
        raise ValueError("variances must be nonnegative")
    mean_a = _check_last_axis(mean_a, m.dim)
    mean_b = _check_last_axis(mean_b, m.dim)
    s = var_a + var_b + m.variance
    return float(gaussian_density(mean_a, mean_b, s))


def delta_from_n(n_particles: int, dim: int, exponent_k: float = DEFAULT_DELTA_EXPONENT) -> float:
    """Kernel width N^(-k/d), so that neighbours on a regular grid can sense each other."""
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return float(n_particles) ** (-exponent_k / dim)
