"""Experiment configuration: strict JSON parsing, rule expansion, problem assembly.

Every parsed config can be turned back into a plain dict (``to_dict``) with
all rules expanded to scalars, which is what ``report.json`` records as
``resolved_config``. Feeding that dict back in reproduces the run.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .energy import (
    ACCELERATION,
    MODES,
    VELOCITY,
    EmpiricalTarget,
    GaussianTarget,
    ObstacleSet,
    ProblemSpec,
    default_obstacle_strength,
)
from .kernels import Mollifier, delta_from_n
from .optimize import OptimizerConfig

EXPERIMENTS = (
    "comparison",
    "gaussian_target",
    "obstacle",
    "acceleration",
    "landscape",
    "convergence",
    "gradcheck",
    "custom",
)
REFERENCES = ("auto", "none", "assignment", "continuum_geodesic")
POINT_KINDS = ("grid", "uniform_random", "normal_random", "explicit")
RNG_ALGORITHM = "numpy.random.Generator(PCG64), draws in order: source, target, initial_velocities"


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _obj(raw, path: str, allowed, required=()) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown key")
    for key in required:
        if key not in raw:
            raise ConfigError(f"{path}.{key}", "missing required key")
    return raw


def _num(raw, path: str, positive=False, nonneg=False) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)) or not math.isfinite(raw):
        raise ConfigError(path, "expected a finite number")
    if positive and not raw > 0:
        raise ConfigError(path, "must be positive")
    if nonneg and raw < 0:
        raise ConfigError(path, "must be nonnegative")
    return float(raw)


def _int(raw, path: str, minimum: int = 0) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(path, "expected an integer")
    if raw < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return raw


def _vec(raw, path: str, dim: int) -> list:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        raw = [raw] * dim
    if not isinstance(raw, list) or len(raw) != dim:
        raise ConfigError(path, f"expected a number or a list of {dim} numbers")
    return [_num(v, f"{path}[{i}]") for i, v in enumerate(raw)]


@dataclass
class PointCloudSpec:
    kind: str
    params: dict

    @classmethod
    def parse(cls, raw, path: str, dim: int) -> "PointCloudSpec":
        raw = _obj(raw, path, ("kind", "low", "high", "mean", "std", "points"), ("kind",))
        kind = raw["kind"]
        if kind not in POINT_KINDS:
            raise ConfigError(f"{path}.kind", f"must be one of {POINT_KINDS}")
        if kind in ("grid", "uniform_random"):
            _obj(raw, path, ("kind", "low", "high"), ("low", "high"))
            params = {"low": _vec(raw["low"], f"{path}.low", dim), "high": _vec(raw["high"], f"{path}.high", dim)}
        elif kind == "normal_random":
            _obj(raw, path, ("kind", "mean", "std"), ("mean", "std"))
            params = {"mean": _vec(raw["mean"], f"{path}.mean", dim), "std": _num(raw["std"], f"{path}.std", positive=True)}
        else:
            _obj(raw, path, ("kind", "points"), ("points",))
            pts = raw["points"]
            if not isinstance(pts, list) or not pts:
                raise ConfigError(f"{path}.points", "expected a non-empty list")
            params = {"points": [_vec(p, f"{path}.points[{i}]", dim) for i, p in enumerate(pts)]}
        return cls(kind, params)

    def count(self) -> Optional[int]:
        return len(self.params["points"]) if self.kind == "explicit" else None

    def generate(self, n: int, dim: int, rng: np.random.Generator, path: str = "") -> np.ndarray:
        p = self.params
        if self.kind == "explicit":
            pts = np.asarray(p["points"], dtype=np.float64)
            if len(pts) != n:
                raise ConfigError(f"{path}.points", f"expected {n} points, got {len(pts)}")
            return pts
        if self.kind == "grid":
            return grid_points(n, p["low"], p["high"], path)
        if self.kind == "uniform_random":
            return rng.uniform(p["low"], p["high"], size=(n, dim))
        return np.asarray(p["mean"]) + p["std"] * rng.standard_normal((n, dim))

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def grid_points(n: int, low, high, path: str = "grid") -> np.ndarray:
    """Tensor grid with equal counts per axis, endpoints included; row-major order."""
    dim = len(low)
    per_axis = round(n ** (1.0 / dim))
    if per_axis**dim != n:
        raise ConfigError(path, f"grid needs a perfect {dim}-th power of points, got {n}")
    axes = [np.linspace(lo, hi, per_axis) if per_axis > 1 else np.array([0.5 * (lo + hi)]) for lo, hi in zip(low, high)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class TargetConfig:
    kind: str  # empirical | gaussian | phase_empirical
    points: Optional[PointCloudSpec] = None
    velocities: Optional[PointCloudSpec] = None
    mean: Optional[list] = None
    std: Optional[float] = None

    @classmethod
    def parse(cls, raw, path: str, mode: str, d: int) -> "TargetConfig":
        raw = _obj(raw, path, ("kind", "points", "positions", "velocities", "mean", "std"), ("kind",))
        kind = raw["kind"]
        phase_dim = d if mode == VELOCITY else 2 * d
        if kind == "empirical":
            _obj(raw, path, ("kind", "points"), ("points",))
            return cls(kind, points=PointCloudSpec.parse(raw["points"], f"{path}.points", phase_dim))
        if kind == "gaussian":
            _obj(raw, path, ("kind", "mean", "std"), ("mean", "std"))
            return cls(kind, mean=_vec(raw["mean"], f"{path}.mean", phase_dim), std=_num(raw["std"], f"{path}.std", positive=True))
        if kind == "phase_empirical":
            if mode != ACCELERATION:
                raise ConfigError(f"{path}.kind", "phase_empirical targets need acceleration mode")
            _obj(raw, path, ("kind", "positions", "velocities"), ("positions", "velocities"))
            return cls(
                kind,
                points=PointCloudSpec.parse(raw["positions"], f"{path}.positions", d),
                velocities=PointCloudSpec.parse(raw["velocities"], f"{path}.velocities", d),
            )
        raise ConfigError(f"{path}.kind", "must be one of ('empirical', 'gaussian', 'phase_empirical')")

    def to_dict(self) -> dict:
        if self.kind == "empirical":
            return {"kind": self.kind, "points": self.points.to_dict()}
        if self.kind == "gaussian":
            return {"kind": self.kind, "mean": self.mean, "std": self.std}
        return {"kind": self.kind, "positions": self.points.to_dict(), "velocities": self.velocities.to_dict()}


@dataclass
class ProblemConfig:
    mode: str
    dim: int
    n_particles: int
    n_times: int
    epsilon: float
    source: PointCloudSpec
    target: TargetConfig
    delta: Optional[float] = None
    delta_k: Optional[float] = None
    circles: list = field(default_factory=list)
    obstacle_strength: Optional[float] = None
    initial_velocities: Optional[PointCloudSpec] = None

    @classmethod
    def parse(cls, raw, path: str = "problem") -> "ProblemConfig":
        allowed = (
            "mode", "dim", "n_particles", "n_times", "epsilon", "delta", "delta_rule",
            "source", "target", "obstacles", "initial_velocities",
        )
        raw = _obj(raw, path, allowed, ("dim", "n_particles", "n_times", "epsilon", "source", "target"))
        mode = raw.get("mode", VELOCITY)
        if mode not in MODES:
            raise ConfigError(f"{path}.mode", f"must be one of {MODES}")
        d = _int(raw["dim"], f"{path}.dim", 1)
        n = _int(raw["n_particles"], f"{path}.n_particles", 1)
        m = _int(raw["n_times"], f"{path}.n_times", 3 if mode == ACCELERATION else 2)
        eps = _num(raw["epsilon"], f"{path}.epsilon", positive=True)

        if ("delta" in raw) == ("delta_rule" in raw):
            raise ConfigError(f"{path}.delta", "give exactly one of delta / delta_rule")
        delta = delta_k = None
        if "delta" in raw:
            delta = _num(raw["delta"], f"{path}.delta", positive=True)
        else:
            rule = _obj(raw["delta_rule"], f"{path}.delta_rule", ("k",))
            delta_k = _num(rule.get("k", 0.99), f"{path}.delta_rule.k", positive=True)
            if delta_k >= 1:
                raise ConfigError(f"{path}.delta_rule.k", "must lie in (0, 1)")

        source = PointCloudSpec.parse(raw["source"], f"{path}.source", d)
        target = TargetConfig.parse(raw["target"], f"{path}.target", mode, d)

        circles, strength = [], None
        if "obstacles" in raw:
            obs = _obj(raw["obstacles"], f"{path}.obstacles", ("circles", "strength"), ("circles",))
            if not isinstance(obs["circles"], list):
                raise ConfigError(f"{path}.obstacles.circles", "expected a list")
            for i, c in enumerate(obs["circles"]):
                cp = f"{path}.obstacles.circles[{i}]"
                c = _obj(c, cp, ("center", "radius"), ("center", "radius"))
                circles.append({"center": _vec(c["center"], f"{cp}.center", d), "radius": _num(c["radius"], f"{cp}.radius", positive=True)})
            if obs.get("strength") is not None:
                strength = _num(obs["strength"], f"{path}.obstacles.strength", nonneg=True)
            if circles and mode == ACCELERATION:
                raise ConfigError(f"{path}.obstacles", "obstacles are only supported in velocity mode")

        v0 = None
        if mode == ACCELERATION:
            if "initial_velocities" not in raw:
                raise ConfigError(f"{path}.initial_velocities", "required in acceleration mode")
            v0 = PointCloudSpec.parse(raw["initial_velocities"], f"{path}.initial_velocities", d)
        elif "initial_velocities" in raw:
            raise ConfigError(f"{path}.initial_velocities", "only valid in acceleration mode")

        return cls(mode, d, n, m, eps, source, target, delta, delta_k, circles, strength, v0)

    @property
    def kernel_dim(self) -> int:
        return self.dim if self.mode == VELOCITY else 2 * self.dim

    def resolved_delta(self, n_particles: Optional[int] = None) -> float:
        if self.delta is not None:
            return self.delta
        return delta_from_n(n_particles or self.n_particles, self.kernel_dim, self.delta_k)

    def resolved_strength(self) -> float:
        if not self.circles:
            return 0.0
        if self.obstacle_strength is not None:
            return self.obstacle_strength
        return default_obstacle_strength(self.n_times, self.epsilon)

    def to_dict(self, resolve: bool = True) -> dict:
        out: dict[str, Any] = {
            "mode": self.mode,
            "dim": self.dim,
            "n_particles": self.n_particles,
            "n_times": self.n_times,
            "epsilon": self.epsilon,
        }
        if resolve or self.delta is not None:
            out["delta"] = self.resolved_delta()
        else:
            out["delta_rule"] = {"k": self.delta_k}
        out["source"] = self.source.to_dict()
        out["target"] = self.target.to_dict()
        if self.circles:
            strength = self.resolved_strength() if resolve else self.obstacle_strength
            out["obstacles"] = {"circles": self.circles, "strength": strength}
        if self.initial_velocities is not None:
            out["initial_velocities"] = self.initial_velocities.to_dict()
        return out


@dataclass
class OptimizerSection:
    alpha: Optional[float]
    alpha_rule: Optional[dict]
    max_steps: int
    lr_reduce_factor: float = 0.2
    lr_reduce_patience: int = 2
    lr_floor: float = 1e-8
    early_stop_patience: int = 5
    seed: int = 0

    @classmethod
    def parse(cls, raw, path: str = "optimizer") -> "OptimizerSection":
        allowed = (
            "alpha", "alpha_rule", "max_steps", "lr_reduce_factor", "lr_reduce_patience",
            "lr_floor", "early_stop_patience", "seed",
        )
        raw = _obj(raw, path, allowed, ("max_steps",))
        if ("alpha" in raw) == ("alpha_rule" in raw):
            raise ConfigError(f"{path}.alpha", "give exactly one of alpha / alpha_rule")
        alpha = rule = None
        if "alpha" in raw:
            alpha = _num(raw["alpha"], f"{path}.alpha", positive=True)
        else:
            r = _obj(raw["alpha_rule"], f"{path}.alpha_rule", ("kind", "value", "c", "floor"), ("kind",))
            kind = r["kind"]
            rp = f"{path}.alpha_rule"
            if kind == "constant":
                _obj(r, rp, ("kind", "value"), ("value",))
                rule = {"kind": kind, "value": _num(r["value"], f"{rp}.value", positive=True)}
            elif kind == "scale_eps":
                _obj(r, rp, ("kind", "c"), ("c",))
                rule = {"kind": kind, "c": _num(r["c"], f"{rp}.c", positive=True)}
            elif kind == "scale_eps_floored":
                _obj(r, rp, ("kind", "c", "floor"), ("c", "floor"))
                rule = {"kind": kind, "c": _num(r["c"], f"{rp}.c", positive=True), "floor": _num(r["floor"], f"{rp}.floor", positive=True)}
            else:
                raise ConfigError(f"{rp}.kind", "must be one of ('constant', 'scale_eps', 'scale_eps_floored')")
        factor = _num(raw.get("lr_reduce_factor", 0.2), f"{path}.lr_reduce_factor")
        if not 0 < factor < 1:
            raise ConfigError(f"{path}.lr_reduce_factor", "must lie in (0, 1)")
        seed = _int(raw.get("seed", 0), f"{path}.seed", 0)
        if seed >= 2**64:
            raise ConfigError(f"{path}.seed", "must fit in 64 bits")
        return cls(
            alpha,
            rule,
            _int(raw["max_steps"], f"{path}.max_steps", 0),
            factor,
            _int(raw.get("lr_reduce_patience", 2), f"{path}.lr_reduce_patience", 1),
            _num(raw.get("lr_floor", 1e-8), f"{path}.lr_floor", nonneg=True),
            _int(raw.get("early_stop_patience", 5), f"{path}.early_stop_patience", 1),
            seed,
        )

    def resolved_alpha(self, epsilon: float) -> float:
        if self.alpha is not None:
            return self.alpha
        r = self.alpha_rule
        if r["kind"] == "constant":
            return r["value"]
        if r["kind"] == "scale_eps":
            return r["c"] * epsilon
        return max(r["c"] * epsilon, r["floor"])

    def build(self, epsilon: float, seed: Optional[int] = None) -> OptimizerConfig:
        return OptimizerConfig(
            learning_rate=self.resolved_alpha(epsilon),
            max_steps=self.max_steps,
            lr_reduce_factor=self.lr_reduce_factor,
            lr_reduce_patience=self.lr_reduce_patience,
            lr_floor=self.lr_floor,
            early_stop_patience=self.early_stop_patience,
            seed=self.seed if seed is None else seed,
        )

    def to_dict(self, epsilon: Optional[float] = None) -> dict:
        out = {}
        if epsilon is not None:
            out["alpha"] = self.resolved_alpha(epsilon)
        elif self.alpha is not None:
            out["alpha"] = self.alpha
        else:
            out["alpha_rule"] = self.alpha_rule
        out.update(
            max_steps=self.max_steps,
            lr_reduce_factor=self.lr_reduce_factor,
            lr_reduce_patience=self.lr_reduce_patience,
            lr_floor=self.lr_floor,
            early_stop_patience=self.early_stop_patience,
            seed=self.seed,
        )
        return out


@dataclass
class ExperimentConfig:
    experiment: str
    problem: Optional[ProblemConfig] = None
    optimizer: Optional[OptimizerSection] = None
    reference: str = "auto"
    error_trace_every: int = 0
    landscape: Optional[dict] = None
    convergence: Optional[dict] = None
    gradcheck: Optional[dict] = None
    output_dir: Optional[str] = None

    @classmethod
    def parse(cls, raw) -> "ExperimentConfig":
        allowed = (
            "experiment", "problem", "optimizer", "reference", "error_trace_every",
            "landscape", "convergence", "gradcheck", "output_dir",
        )
        raw = _obj(raw, "config", allowed, ("experiment",))
        exp = raw["experiment"]
        if exp not in EXPERIMENTS:
            raise ConfigError("config.experiment", f"must be one of {EXPERIMENTS}")
        cfg = cls(exp)
        if exp != "gradcheck":
            for key in ("problem", "optimizer"):
                if key not in raw and not (exp == "landscape" and key == "optimizer"):
                    raise ConfigError(f"config.{key}", "missing required key")
        if "problem" in raw:
            cfg.problem = ProblemConfig.parse(raw["problem"])
        if "optimizer" in raw:
            cfg.optimizer = OptimizerSection.parse(raw["optimizer"])
        cfg.reference = raw.get("reference", "auto")
        if cfg.reference not in REFERENCES:
            raise ConfigError("config.reference", f"must be one of {REFERENCES}")
        cfg.error_trace_every = _int(raw.get("error_trace_every", 0), "config.error_trace_every", 0)
        if "output_dir" in raw:
            if not isinstance(raw["output_dir"], str):
                raise ConfigError("config.output_dir", "expected a string")
            cfg.output_dir = raw["output_dir"]

        for key in ("landscape", "convergence", "gradcheck"):
            if key in raw and exp != key:
                raise ConfigError(f"config.{key}", f"only valid for experiment '{key}'")
        if exp == "landscape":
            ls = _obj(raw.get("landscape", {}), "config.landscape", ("grid_size", "low", "high"))
            cfg.landscape = {
                "grid_size": _int(ls.get("grid_size", 101), "config.landscape.grid_size", 2),
                "low": _num(ls.get("low", -0.5), "config.landscape.low"),
                "high": _num(ls.get("high", 2.0), "config.landscape.high"),
            }
            if cfg.landscape["high"] <= cfg.landscape["low"]:
                raise ConfigError("config.landscape.high", "must exceed low")
            p = cfg.problem
            if (p.n_particles, p.n_times, p.dim, p.mode) != (2, 2, 1, VELOCITY):
                raise ConfigError("config.problem", "landscape needs N=2, M=2, d=1, velocity mode")
            if p.target.kind != "empirical":
                raise ConfigError("config.problem.target.kind", "landscape needs an empirical target")
        if exp == "convergence":
            cv = _obj(raw.get("convergence", {}), "config.convergence", ("n_values",), ("n_values",))
            ns = cv["n_values"]
            if not isinstance(ns, list) or len(ns) < 1:
                raise ConfigError("config.convergence.n_values", "expected a non-empty list")
            cfg.convergence = {"n_values": [_int(v, f"config.convergence.n_values[{i}]", 1) for i, v in enumerate(ns)]}
            if cfg.problem.dim != 1:
                raise ConfigError("config.problem.dim", "convergence study is one-dimensional")
        if exp == "gradcheck":
            gc = _obj(raw.get("gradcheck", {}), "config.gradcheck", ("instances", "seed", "tolerance"))
            cfg.gradcheck = {
                "instances": _int(gc.get("instances", 100), "config.gradcheck.instances", 1),
                "seed": _int(gc.get("seed", 0), "config.gradcheck.seed", 0),
                "tolerance": _num(gc.get("tolerance", 1e-6), "config.gradcheck.tolerance", positive=True),
            }
        return cfg

    def to_dict(self, resolve: bool = True) -> dict:
        out: dict[str, Any] = {"experiment": self.experiment}
        if self.problem is not None:
            out["problem"] = self.problem.to_dict(resolve and self.experiment != "convergence")
            if self.experiment == "convergence" and self.problem.delta is not None:
                out["problem"]["delta"] = self.problem.delta
        if self.optimizer is not None:
            eps = self.problem.epsilon if (resolve and self.problem is not None) else None
            out["optimizer"] = self.optimizer.to_dict(eps)
        out["reference"] = self.reference
        out["error_trace_every"] = self.error_trace_every
        for key in ("landscape", "convergence", "gradcheck"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        return out


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc}") from exc
    return ExperimentConfig.parse(raw)


@dataclass
class BuiltProblem:
    spec: ProblemSpec
    sources: np.ndarray
    initial_velocities: Optional[np.ndarray]


def build_problem(problem: ProblemConfig, seed: int, n_particles: Optional[int] = None) -> BuiltProblem:
    """Draw / lay out the point clouds and assemble the ProblemSpec."""
    n = n_particles or problem.n_particles
    d = problem.dim
    rng = np.random.default_rng(seed)
    sources = problem.source.generate(n, d, rng, "problem.source")

    t = problem.target
    if t.kind == "gaussian":
        target = GaussianTarget(np.asarray(t.mean), t.std)
    elif t.kind == "empirical":
        target = EmpiricalTarget(t.points.generate(n, problem.kernel_dim, rng, "problem.target.points"))
    else:
        pos = t.points.generate(n, d, rng, "problem.target.positions")
        vel = t.velocities.generate(n, d, rng, "problem.target.velocities")
        target = EmpiricalTarget(np.concatenate([pos, vel], axis=1))

    v0 = None
    if problem.mode == ACCELERATION:
        v0 = problem.initial_velocities.generate(n, d, rng, "problem.initial_velocities")

    if problem.circles:
        obstacles = ObstacleSet(
            [c["center"] for c in problem.circles],
            [c["radius"] for c in problem.circles],
            problem.resolved_strength(),
        )
    else:
        obstacles = ObstacleSet()

    spec = ProblemSpec(
        mode=problem.mode,
        epsilon=problem.epsilon,
        mollifier=Mollifier(problem.resolved_delta(n), problem.kernel_dim),
        target=target,
        obstacles=obstacles,
        initial_velocities=v0,
    )
    return BuiltProblem(spec, sources, v0)
