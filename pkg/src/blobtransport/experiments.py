"""Experiment drivers: single runs, loss landscapes, convergence studies, gradient checks.

Each driver writes its files into an output directory and returns the
report dictionary that is also saved as ``report.json``.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import RNG_ALGORITHM, ConfigError, ExperimentConfig, build_problem
from .energy import (
    ACCELERATION,
    VELOCITY,
    EmpiricalTarget,
    GaussianTarget,
    ObstacleSet,
    ProblemSpec,
    TrajectoryField,
    energy_terms,
    full_objective,
    penalty_constant,
    terminal_penalty_full,
    terminal_points,
)
from .gradients import finite_difference_gradient, objective_gradient, relative_gradient_error
from .kernels import Mollifier
from .metrics import chord_map, error_all_times, error_terminal, loglog_slope, penetration_depth
from .optimize import LossTrace, OptimizationError, gd_run, init_acceleration, init_straight_lines
from .oracle import continuum_geodesic, hungarian_assign

log = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"
RUN_FILES = ("trajectories.csv", "loss.csv", "report.json")


@dataclass
class RunReport:
    config: dict
    trajectories: TrajectoryField
    trace: LossTrace
    metrics: dict
    status: str = "ok"
    wall_time: float = 0.0
    error_trace: Optional[np.ndarray] = None
    message: Optional[str] = None
    initial_velocities: Optional[np.ndarray] = None

    def to_json(self) -> dict:
        tr = self.trace
        if len(tr) == 0:  # failed before the first record
            loss = {"initial": None, "last": None, "best": None, "steps_taken": 0, "stopped_early": False}
        else:
            loss = self._loss_summary()
        out = {
            "status": self.status,
            "resolved_config": self.config,
            "rng": RNG_ALGORITHM,
            "loss": loss,
            "metrics": self.metrics,
            "wall_time_s": self.wall_time,
            "version": __version__,
        }
        if self.message:
            out["message"] = self.message
        return out

    def _loss_summary(self) -> dict:
        tr = self.trace
        best = tr.best_index()
        return {
            "initial": _terms_dict(tr.record(0)),
            "last": _terms_dict(tr.record(len(tr) - 1)),
            "best": _terms_dict(tr.record(best)),
            "best_iteration": int(tr.iterations[best]),
            "steps_taken": int(tr.iterations[-1]),
            "stopped_early": tr.stopped_early,
            "final_lr": float(tr.column("lr")[-1]),
        }


def _terms_dict(rec: dict) -> dict:
    return {k: rec[k] for k in ("total", "kinetic_or_cc", "potential", "nonlocal")}


# ---------------------------------------------------------------- output helpers


def prepare_output_dir(out_dir, files, overwrite: bool) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not overwrite:
        clash = [f for f in files if (out / f).exists()]
        if clash:
            raise ConfigError("output_dir", f"{out / clash[0]} exists; pass --overwrite to replace it")
    return out


def _fmt(x) -> str:
    return FLOAT_FMT % x


def write_csv(path: Path, header, rows, int_columns: int = 0) -> None:
    """UTF-8 CSV, '.' decimal separator, 17 significant digits for floats."""
    rows = np.asarray(rows, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            ints = [str(int(v)) for v in row[:int_columns]]
            fh.write(",".join(ints + [_fmt(v) for v in row[int_columns:]]) + "\n")


def write_trajectories(path: Path, traj: TrajectoryField, initial_velocities=None) -> None:
    y = traj.values
    n, m, d = y.shape
    t = traj.times()
    header = ["particle_index", "knot_index", "t"] + [f"coord_{a}" for a in range(d)]
    cols = [np.repeat(np.arange(n), m), np.tile(np.arange(m), n), np.tile(t, n), y.reshape(n * m, d)]
    if traj.mode == ACCELERATION:
        vel = np.empty_like(y)
        vel[:, 1:] = (y[:, 1:] - y[:, :-1]) * (m - 1)
        vel[:, 0] = initial_velocities if initial_velocities is not None else vel[:, 1]
        header += [f"vel_{a}" for a in range(d)]
        cols.append(vel.reshape(n * m, d))
    rows = np.column_stack([np.asarray(c, dtype=np.float64).reshape(n * m, -1) for c in cols])
    write_csv(path, header, rows, int_columns=2)


def write_loss(path: Path, trace: LossTrace) -> None:
    write_csv(path, list(trace.columns), trace.array, int_columns=1)


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- single run


def _initialize(spec: ProblemSpec, sources, v0, n_times: int) -> TrajectoryField:
    if spec.mode == VELOCITY:
        return init_straight_lines(sources, spec.target, n_times)
    return init_acceleration(sources, v0, spec.target, n_times)


def _reference_kind(cfg: ExperimentConfig, spec: ProblemSpec) -> str:
    if cfg.reference != "auto":
        return cfg.reference
    if isinstance(spec.target, EmpiricalTarget):
        return "assignment"
    return "none"


def _exact_map(kind: str, spec: ProblemSpec, sources):
    """Exact reference map for error metrics, or None when there is none."""
    if kind == "continuum_geodesic":
        if spec.space_dim != 1:
            raise ConfigError("config.reference", "continuum_geodesic is a one-dimensional reference")
        return continuum_geodesic
    if kind == "assignment" and spec.mode == VELOCITY and isinstance(spec.target, EmpiricalTarget):
        a = hungarian_assign(sources, spec.target.points)
        return chord_map(spec.target.points[a.permutation])
    return None


def compute_metrics(traj: TrajectoryField, spec: ProblemSpec, reference: str, sources) -> dict:
    terms = energy_terms(traj, spec)
    term_pts = terminal_points(traj, spec)
    m = {
        "final": terms._asdict(),
        "terminal_penalty_full": terminal_penalty_full(term_pts, spec),
        "penalty_constant": penalty_constant(spec),
        "full_objective": full_objective(traj, spec),
        "reference": reference,
    }
    m["final"]["nonlocal"] = m["final"].pop("nonlocal_")
    if spec.obstacles.active:
        m["penetration_depth"] = penetration_depth(traj, spec.obstacles)
        m["potential_energy"] = terms.potential
        m["obstacle_strength"] = spec.obstacles.strength
    if isinstance(spec.target, EmpiricalTarget):
        match = hungarian_assign(term_pts, spec.target.points)
        m["terminal_rms_mismatch"] = float(np.sqrt(match.mean_cost))
    if reference == "assignment" and spec.mode == VELOCITY and isinstance(spec.target, EmpiricalTarget):
        a = hungarian_assign(sources, spec.target.points)
        m["hungarian_mean_cost"] = a.mean_cost
        m["hungarian_permutation"] = a.permutation.tolist()
        m["relative_gap"] = abs(m["full_objective"] - a.mean_cost) / a.mean_cost if a.mean_cost > 0 else None
    exact = _exact_map(reference, spec, sources)
    if exact is not None:
        m["error_all_times"] = error_all_times(traj, exact)
        m["error_terminal"] = error_terminal(traj, exact)
    return m


def execute(cfg: ExperimentConfig, n_particles: Optional[int] = None, seed: Optional[int] = None, solver=None):
    """Build, initialize, optimize. Returns a RunReport without touching the disk."""
    if cfg.problem is None or cfg.optimizer is None:
        raise ConfigError("config", "problem and optimizer sections are required")
    seed = cfg.optimizer.seed if seed is None else seed
    built = build_problem(cfg.problem, seed, n_particles)
    spec = built.spec
    init = _initialize(spec, built.sources, built.initial_velocities, cfg.problem.n_times)
    opt = cfg.optimizer.build(spec.epsilon, seed)
    reference = _reference_kind(cfg, spec)

    err_rows = []
    exact = None
    if cfg.error_trace_every > 0:
        try:
            exact = _exact_map(reference, spec, built.sources)
        except ValueError as exc:
            raise ConfigError("config.reference", str(exc)) from exc
    if exact is not None:
        every = cfg.error_trace_every

        def callback(it, values):
            if it % every == 0:
                tf = TrajectoryField(values, init.frozen_knots)
                err_rows.append((it, error_all_times(tf, exact), error_terminal(tf, exact)))
    else:
        callback = None

    resolved = cfg.to_dict(resolve=True)
    if n_particles is not None:
        resolved["problem"]["n_particles"] = n_particles
        resolved["problem"]["delta"] = spec.mollifier.delta
    resolved["optimizer"]["seed"] = seed

    start = time.perf_counter()
    status, message = "ok", None
    try:
        if solver is None:
            traj, trace = gd_run(init, spec, opt, callback)
        else:
            traj, trace = solver(init, spec, opt)
    except OptimizationError as exc:
        traj, trace = exc.traj, exc.trace
        status, message = "numerical_failure", str(exc)
    wall = time.perf_counter() - start

    metrics = compute_metrics(traj, spec, reference, built.sources) if status == "ok" else {}
    report = RunReport(
        config=resolved,
        trajectories=traj,
        trace=trace,
        metrics=metrics,
        status=status,
        wall_time=wall,
        error_trace=np.array(err_rows) if err_rows else None,
        message=message,
        initial_velocities=built.initial_velocities,
    )
    return report


class NumericalFailure(RuntimeError):
    """Optimizer hit a non-finite value; partial outputs were written."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


def run_experiment(cfg: ExperimentConfig, out_dir=None, overwrite: bool = False) -> dict:
    out = prepare_output_dir(_out_dir(cfg, out_dir), RUN_FILES + ("errors.csv",), overwrite)
    report = execute(cfg)
    write_trajectories(out / "trajectories.csv", report.trajectories, report.initial_velocities)
    write_loss(out / "loss.csv", report.trace)
    if report.error_trace is not None:
        write_csv(out / "errors.csv", ["iter", "error_all_times", "error_terminal"], report.error_trace, int_columns=1)
    payload = report.to_json()
    write_json(out / "report.json", payload)
    if report.status != "ok":
        raise NumericalFailure(report.message, payload)
    return payload


def _out_dir(cfg: ExperimentConfig, out_dir) -> Path:
    target = out_dir or cfg.output_dir
    if target is None:
        raise ConfigError("config.output_dir", "no output directory given (use --out)")
    return Path(target)


# ---------------------------------------------------------------- loss landscape


def landscape_markers(spec: ProblemSpec, sources) -> dict:
    """Source / target / flipped / initialization points of the two-particle landscape."""
    z = np.asarray(sources, dtype=np.float64).reshape(2)
    w = spec.target.points.reshape(2)
    com = float(np.mean(w))
    return {
        "source": (z[0], z[1]),
        "target": (w[0], w[1]),
        "flipped": (w[1], w[0]),
        "initialization": (com, com),
    }


def _two_particle_field(z, y12, y22) -> TrajectoryField:
    return TrajectoryField(np.array([[[z[0]], [y12]], [[z[1]], [y22]]]))


def run_landscape(cfg: ExperimentConfig, out_dir=None, overwrite: bool = False) -> dict:
    if cfg.experiment != "landscape":
        raise ConfigError("config.experiment", "run_landscape needs a landscape config")
    out = prepare_output_dir(_out_dir(cfg, out_dir), ("landscape.csv", "report.json"), overwrite)
    seed = cfg.optimizer.seed if cfg.optimizer is not None else 0
    built = build_problem(cfg.problem, seed)
    spec = built.spec
    z = built.sources.reshape(2)
    ls = cfg.landscape
    axis = np.linspace(ls["low"], ls["high"], ls["grid_size"])

    start = time.perf_counter()
    rows = []
    for a in axis:
        for b in axis:
            rows.append((a, b, energy_terms(_two_particle_field(z, a, b), spec).total))
    write_csv(out / "landscape.csv", ["y_1_2", "y_2_2", "value"], rows)

    markers = {}
    for name, (a, b) in landscape_markers(spec, z).items():
        tf = _two_particle_field(z, a, b)
        terms = energy_terms(tf, spec)
        markers[name] = {
            "y_1_2": float(a),
            "y_2_2": float(b),
            "total": terms.total,
            "kinetic": terms.control,
            "nonlocal": terms.nonlocal_,
            "terminal_penalty_full": terminal_penalty_full(tf.terminal, spec),
        }
    payload = {
        "status": "ok",
        "resolved_config": cfg.to_dict(resolve=True),
        "markers": markers,
        "grid": {"size": ls["grid_size"], "low": ls["low"], "high": ls["high"]},
        "wall_time_s": time.perf_counter() - start,
        "version": __version__,
    }
    write_json(out / "report.json", payload)
    return payload


# ---------------------------------------------------------------- convergence in N


def derived_seed(seed: int, n: int) -> int:
    return int(np.random.SeedSequence([seed, n]).generate_state(1, np.uint64)[0])


def _convergence_job(args):
    cfg_dict, n, seed = args
    cfg = ExperimentConfig.parse(cfg_dict)
    report = execute(cfg, n_particles=n, seed=seed)
    return _convergence_row(n, report)


def _convergence_row(n: int, report: RunReport) -> dict:
    m = report.metrics
    return {
        "n_particles": n,
        "delta": report.config["problem"]["delta"],
        "status": report.status,
        "error_terminal": m.get("error_terminal", float("nan")),
        "error_all_times": m.get("error_all_times", float("nan")),
        "final_total": m.get("final", {}).get("total", float("nan")),
        "steps_taken": int(report.trace.iterations[-1]) if len(report.trace) else 0,
        "stopped_early": report.trace.stopped_early,
        "wall_time_s": report.wall_time,
    }


def run_convergence(
    cfg: ExperimentConfig,
    out_dir=None,
    overwrite: bool = False,
    threads: int = 1,
    solver: Optional[Callable] = None,
) -> dict:
    """Terminal error against the exact map for each N, and the log-log slope.

    ``solver(init, spec, opt) -> (traj, trace)`` replaces gradient descent
    (in-process only).
    """
    if cfg.experiment != "convergence":
        raise ConfigError("config.experiment", "run_convergence needs a convergence config")
    out = prepare_output_dir(_out_dir(cfg, out_dir), ("convergence.csv", "report.json"), overwrite)
    if cfg.reference not in ("auto", "continuum_geodesic"):
        raise ConfigError("config.reference", "convergence study measures against continuum_geodesic")
    cfg.reference = "continuum_geodesic"
    ns = cfg.convergence["n_values"]
    seeds = [derived_seed(cfg.optimizer.seed, n) for n in ns]

    start = time.perf_counter()
    if solver is None and threads > 1:
        jobs = [(cfg.to_dict(resolve=False), n, s) for n, s in zip(ns, seeds)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_convergence_job, jobs))
    else:
        rows = []
        for n, s in zip(ns, seeds):
            log.info("convergence run N=%d", n)
            rows.append(_convergence_row(n, execute(cfg, n_particles=n, seed=s, solver=solver)))

    write_csv(
        out / "convergence.csv",
        ["n_particles", "delta", "error_terminal", "error_all_times", "final_total"],
        [(r["n_particles"], r["delta"], r["error_terminal"], r["error_all_times"], r["final_total"]) for r in rows],
        int_columns=1,
    )
    pts = [(r["n_particles"], r["error_terminal"]) for r in rows]
    try:
        slope, degenerate, reason = loglog_slope(pts), False, None
    except ValueError as exc:
        slope, degenerate, reason = None, True, str(exc)
    payload = {
        "status": "ok" if all(r["status"] == "ok" for r in rows) else "numerical_failure",
        "resolved_config": cfg.to_dict(resolve=True),
        "rng": RNG_ALGORITHM,
        "runs": rows,
        "slope": slope,
        "degenerate": degenerate,
        "degenerate_reason": reason,
        "wall_time_s": time.perf_counter() - start,
        "version": __version__,
    }
    write_json(out / "report.json", payload)
    if payload["status"] != "ok":
        failed = [r["n_particles"] for r in rows if r["status"] != "ok"]
        raise NumericalFailure(f"optimizer failed for N in {failed}", payload)
    return payload


# ---------------------------------------------------------------- gradient check

GRADCHECK_CASES = (
    "velocity_empirical",
    "velocity_gaussian",
    "velocity_obstacle",
    "acceleration_empirical",
    "acceleration_gaussian",
)
# knots closer than this to an obstacle boundary sit on the penalty's kink
_KINK_MARGIN = 1e-3


def random_instance(case: str, rng: np.random.Generator):
    """Seeded random (TrajectoryField, ProblemSpec) for one gradient-check case."""
    accel = case.startswith("acceleration")
    d = int(rng.integers(1, 3))
    n = int(rng.integers(1, 6))
    m = int(rng.integers(3 if accel else 2, 7))
    kd = 2 * d if accel else d
    mollifier = Mollifier(float(rng.uniform(0.3, 1.0)), kd)
    eps = float(rng.uniform(0.1, 1.0))
    values = rng.normal(scale=0.7, size=(n, m, d))
    if case.endswith("gaussian"):
        target = GaussianTarget(rng.normal(scale=0.5, size=kd), float(rng.uniform(0.3, 1.0)))
    else:
        target = EmpiricalTarget(rng.normal(scale=0.7, size=(n, kd)))
    obstacles = ObstacleSet()
    if case == "velocity_obstacle":
        k = int(rng.integers(1, 3))
        centers = rng.normal(scale=0.5, size=(k, d))
        radii = rng.uniform(0.3, 0.8, size=k)
        obstacles = ObstacleSet(centers, radii, float(rng.uniform(1.0, 10.0)))
        for _ in range(1000):
            dist = np.linalg.norm(values[:, 1:, None, :] - centers, axis=-1)
            if np.all(np.abs(dist - radii) > _KINK_MARGIN):
                break
            values[:, 1:] = rng.normal(scale=0.7, size=(n, m - 1, d))
    spec = ProblemSpec(
        ACCELERATION if accel else VELOCITY,
        eps,
        mollifier,
        target,
        obstacles,
        initial_velocities=np.zeros((n, d)) if accel else None,
    )
    return TrajectoryField(values, 2 if accel else 1), spec


def stationary_instance() -> tuple:
    """One particle sitting on its target: the gradient vanishes exactly."""
    spec = ProblemSpec(VELOCITY, 1.0, Mollifier(0.5, 1), EmpiricalTarget([[0.7]]))
    return TrajectoryField(np.full((1, 3, 1), 0.7)), spec


def run_gradcheck(
    cfg: Optional[ExperimentConfig] = None,
    out_dir=None,
    overwrite: bool = False,
    gradient_fn: Optional[Callable] = None,
) -> dict:
    """Analytic gradient vs central differences on seeded random instances.

    ``gradient_fn(traj, spec)`` substitutes the analytic gradient (harness tests).
    """
    opts = (cfg.gradcheck if cfg is not None and cfg.gradcheck else None) or {
        "instances": 100,
        "seed": 0,
        "tolerance": 1e-6,
    }
    grad_fn = gradient_fn or objective_gradient
    start = time.perf_counter()
    per_case = {}
    for c_idx, case in enumerate(GRADCHECK_CASES):
        rng = np.random.default_rng([opts["seed"], c_idx])
        worst = 0.0
        for _ in range(opts["instances"]):
            traj, spec = random_instance(case, rng)
            err = relative_gradient_error(grad_fn(traj, spec), finite_difference_gradient(traj, spec))
            worst = max(worst, err)
        per_case[case] = {"max_relative_error": worst, "passed": worst <= opts["tolerance"]}
    traj, spec = stationary_instance()
    g = grad_fn(traj, spec)
    per_case["stationary"] = {
        "max_abs_gradient": float(np.max(np.abs(g))),
        "max_relative_error": relative_gradient_error(g, finite_difference_gradient(traj, spec)),
    }
    per_case["stationary"]["passed"] = per_case["stationary"]["max_relative_error"] <= opts["tolerance"]

    payload = {
        "status": "ok" if all(v["passed"] for v in per_case.values()) else "failed",
        "passed": all(v["passed"] for v in per_case.values()),
        "settings": opts,
        "cases": per_case,
        "wall_time_s": time.perf_counter() - start,
        "version": __version__,
    }
    target_dir = out_dir or (cfg.output_dir if cfg is not None else None)
    if target_dir is not None:
        out = prepare_output_dir(target_dir, ("report.json",), overwrite)
        write_json(out / "report.json", payload)
    return payload
