"""Named experiment configurations as raw JSON-style dicts.

``preset(name)`` returns a fresh deep copy so callers may edit it before
passing it to :meth:`ExperimentConfig.parse`.
"""
from __future__ import annotations

import copy

UNIT_SQUARE = {"kind": "grid", "low": [0.0, 0.0], "high": [1.0, 1.0]}

_PRESETS = {
    # uniform samples to uniform samples, checked against the optimal assignment
    "comparison": {
        "experiment": "comparison",
        "problem": {
            "dim": 2,
            "n_particles": 30,
            "n_times": 3,
            "epsilon": 0.01,
            "delta_rule": {"k": 0.99},
            "source": {"kind": "uniform_random", "low": [0.0, 0.0], "high": [1.0, 1.0]},
            "target": {"kind": "empirical", "points": {"kind": "uniform_random", "low": [1.0, 1.0], "high": [2.0, 2.0]}},
        },
        "optimizer": {"alpha": 0.01, "max_steps": 2000, "seed": 0},
    },
    # grid to a continuum Gaussian (long: 5e6 steps at N=225)
    "gaussian_target": {
        "experiment": "gaussian_target",
        "problem": {
            "dim": 2,
            "n_particles": 225,
            "n_times": 5,
            "epsilon": 0.01,
            "delta_rule": {"k": 0.99},
            "source": UNIT_SQUARE,
            "target": {"kind": "gaussian", "mean": [1.5, 1.5], "std": 0.5},
        },
        "optimizer": {"alpha_rule": {"kind": "scale_eps", "c": 0.01}, "max_steps": 5_000_000, "seed": 0},
    },
    # same, against iid samples of that Gaussian
    "gaussian_samples": {
        "experiment": "gaussian_target",
        "problem": {
            "dim": 2,
            "n_particles": 225,
            "n_times": 5,
            "epsilon": 0.01,
            "delta_rule": {"k": 0.99},
            "source": UNIT_SQUARE,
            "target": {"kind": "empirical", "points": {"kind": "normal_random", "mean": [1.5, 1.5], "std": 0.5}},
        },
        "optimizer": {"alpha_rule": {"kind": "scale_eps", "c": 0.01}, "max_steps": 5_000_000, "seed": 0},
    },
    "obstacle": {
        "experiment": "obstacle",
        "problem": {
            "dim": 2,
            "n_particles": 25,
            "n_times": 21,
            "epsilon": 0.1,
            "delta_rule": {"k": 0.99},
            "source": UNIT_SQUARE,
            "target": {"kind": "gaussian", "mean": [1.5, 1.7], "std": 0.2},
            "obstacles": {
                "circles": [
                    {"center": [1.0, 1.5], "radius": 0.2},
                    {"center": [1.25, 1.25], "radius": 0.2},
                ],
                "strength": None,
            },
        },
        "optimizer": {"alpha_rule": {"kind": "scale_eps", "c": 0.001}, "max_steps": 200_000, "seed": 0},
    },
    "acceleration": {
        "experiment": "acceleration",
        "problem": {
            "mode": "acceleration",
            "dim": 1,
            "n_particles": 10,
            "n_times": 11,
            "epsilon": 1e-4,
            "delta_rule": {"k": 0.99},
            "source": {"kind": "grid", "low": [0.0], "high": [1.0]},
            "initial_velocities": {"kind": "grid", "low": [0.0], "high": [0.0]},
            "target": {
                "kind": "phase_empirical",
                "positions": {"kind": "grid", "low": [2.0], "high": [2.5]},
                "velocities": {"kind": "grid", "low": [-2.0], "high": [2.0]},
            },
        },
        "optimizer": {"alpha_rule": {"kind": "scale_eps", "c": 0.004}, "max_steps": 1_000_000, "seed": 0},
    },
    # 1-d uniform to uniform with small epsilon; errors traced along the descent
    "error_decay": {
        "experiment": "custom",
        "problem": {
            "dim": 1,
            "n_particles": 20,
            "n_times": 5,
            "epsilon": 0.001,
            "delta_rule": {"k": 0.99},
            "source": {"kind": "grid", "low": [0.0], "high": [1.0]},
            "target": {"kind": "empirical", "points": {"kind": "grid", "low": [2.0], "high": [2.5]}},
        },
        "optimizer": {
            "alpha_rule": {"kind": "scale_eps_floored", "c": 0.001, "floor": 1e-5},
            "max_steps": 1_000_000,
            "seed": 0,
        },
        "reference": "continuum_geodesic",
        "error_trace_every": 1000,
    },
    "landscape": {
        "experiment": "landscape",
        "problem": {
            "dim": 1,
            "n_particles": 2,
            "n_times": 2,
            "epsilon": 0.1,
            "delta": 0.1,
            "source": {"kind": "explicit", "points": [[0.0], [0.5]]},
            "target": {"kind": "empirical", "points": {"kind": "explicit", "points": [[1.0], [1.5]]}},
        },
        "landscape": {"grid_size": 101, "low": -0.5, "high": 2.0},
    },
    "convergence": {
        "experiment": "convergence",
        "problem": {
            "dim": 1,
            "n_particles": 5,
            "n_times": 5,
            "epsilon": 0.01,
            "delta_rule": {"k": 0.99},
            "source": {"kind": "grid", "low": [0.0], "high": [1.0]},
            "target": {"kind": "empirical", "points": {"kind": "grid", "low": [2.0], "high": [2.5]}},
        },
        "optimizer": {"alpha_rule": {"kind": "scale_eps", "c": 0.003}, "max_steps": 2_000_000, "seed": 0},
        "convergence": {"n_values": [5, 10, 20, 40, 80, 100]},
    },
    "gradcheck": {"experiment": "gradcheck", "gradcheck": {"instances": 100, "seed": 0, "tolerance": 1e-6}},
}

# landscape panels: small / large mollifier width crossed with small / large epsilon
LANDSCAPE_DELTAS = (0.1, 1.0)
LANDSCAPE_EPSILONS = (0.01, 1.0)


def names() -> tuple:
    return tuple(_PRESETS)


def preset(name: str, **overrides) -> dict:
    """Deep copy of a preset; ``overrides`` replace top-level optimizer/problem keys, e.g.
    ``preset("obstacle", max_steps=10)``."""
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {names()}")
    raw = copy.deepcopy(_PRESETS[name])
    for key, value in overrides.items():
        if "optimizer" in raw and key in ("alpha", "alpha_rule", "max_steps", "seed", "lr_reduce_patience", "early_stop_patience"):
            if key in ("alpha", "alpha_rule"):
                raw["optimizer"].pop("alpha", None)
                raw["optimizer"].pop("alpha_rule", None)
            raw["optimizer"][key] = value
        elif key in ("n_values",):
            raw["convergence"][key] = value
        elif key in raw.get("problem", {}) or key in ("delta", "delta_rule", "obstacles"):
            if key in ("delta", "delta_rule"):
                raw["problem"].pop("delta", None)
                raw["problem"].pop("delta_rule", None)
            raw["problem"][key] = value
        else:
            raw[key] = value
    return raw
