"""Acceptance criteria A1-A8, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict that pytest prints in an
"acceptance criteria" section at the end of the run. The long tier (A3 and
the full-length A6) is marked ``slow``; deselect with ``-m "not slow"``.
"""
from statistics import NormalDist

import numpy as np
import pytest

from blobtransport.config import ExperimentConfig
from blobtransport.energy import (
    VELOCITY,
    GaussianTarget,
    ProblemSpec,
    terminal_penalty_full,
)
from blobtransport.experiments import execute, run_convergence, run_gradcheck
from blobtransport.kernels import Mollifier
from blobtransport.metrics import error_terminal
from blobtransport.oracle import (
    brute_force_assign,
    continuum_geodesic,
    gaussian_penalty_closed_form,
    hungarian_assign,
    monotone_map_1d,
)
from blobtransport.presets import preset


def test_a1_near_optimal_against_assignment(criterion):
    report = execute(ExperimentConfig.parse(preset("comparison")))
    m = report.metrics
    gap = abs(m["full_objective"] - m["hungarian_mean_cost"]) / m["hungarian_mean_cost"]
    penalty_ok = m["terminal_penalty_full"] <= 0.05 * m["hungarian_mean_cost"]
    ok = criterion(
        "A1",
        gap <= 0.02 and penalty_ok,
        f"blob {m['full_objective']:.4f} vs assignment {m['hungarian_mean_cost']:.4f}: "
        f"gap {gap:.4%} (<= 2%), penalty {m['terminal_penalty_full']:.4g} (<= {0.05 * m['hungarian_mean_cost']:.4g})",
    )
    assert ok


def test_a2_error_decay(criterion):
    raw = preset("error_decay")
    raw["error_trace_every"] = raw["optimizer"]["max_steps"]
    report = execute(ExperimentConfig.parse(raw))
    init_err = report.error_trace[0, 2]
    final_err = error_terminal(report.trajectories, continuum_geodesic)
    totals = report.trace.total
    ok = criterion(
        "A2",
        final_err <= 0.1 * init_err and totals.min() <= totals[0],
        f"terminal error {init_err:.4g} -> {final_err:.4g} (ratio {final_err / init_err:.3g} <= 0.1), "
        f"best loss {totals.min():.6g} <= initial {totals[0]:.6g}",
    )
    assert ok


@pytest.mark.slow
def test_a3_convergence_rate(criterion, tmp_path):
    cfg = ExperimentConfig.parse(preset("convergence", max_steps=500_000))
    report = run_convergence(cfg, tmp_path)
    slope = report["slope"]
    errors = ", ".join(f"N={r['n_particles']}: {r['error_terminal']:.3g}" for r in report["runs"])
    ok = criterion(
        "A3",
        slope is not None and -1.3 <= slope <= -0.6,
        f"log-log slope {slope} in [-1.3, -0.6] ({errors})",
    )
    assert ok


def test_a4_gaussian_consistency(criterion):
    m = Mollifier(0.3, 1)
    eps = 1.0
    spec = ProblemSpec(VELOCITY, eps, m, GaussianTarget([0.0], 1.0))
    limit = gaussian_penalty_closed_form([0.0], 1.0, [0.0], 1.0, m, eps)
    values = {}
    for n in (50, 200, 800):
        grid = np.array([NormalDist().inv_cdf((i + 0.5) / n) for i in range(n)])[:, None]
        values[n] = terminal_penalty_full(grid, spec)
    decreasing = values[50] > values[200] > values[800] > limit - 1e-15
    ok = criterion(
        "A4",
        limit == 0.0 and decreasing and values[800] <= values[50] and values[800] <= 0.05 / eps,
        "full penalty " + ", ".join(f"N={n}: {v:.3e}" for n, v in values.items())
        + f" -> closed form {limit}; N=800 value <= {0.05 / eps}",
    )
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="the soft obstacle penalty at c_Omega = 1/(h eps) leaves knots inside a circle; "
    "see the decisions ledger",
)
def test_a5_obstacle_avoidance(criterion):
    m = execute(ExperimentConfig.parse(preset("obstacle"))).metrics
    strength = m["obstacle_strength"]
    depth, pe = m["penetration_depth"], m["potential_energy"]
    ok = criterion(
        "A5",
        depth <= 0.01 and pe <= 1e-6 * strength,
        f"penetration {depth:.4g} (<= 0.01), PE {pe:.4g} (<= {1e-6 * strength:.3g}) at c_Omega {strength:g}",
    )
    assert ok


def _acceleration_mismatch(max_steps):
    """Terminal (position, velocity) RMS distance to the optimally assigned phase targets."""
    report = execute(ExperimentConfig.parse(preset("acceleration", max_steps=max_steps)))
    return report.metrics["terminal_rms_mismatch"]


def test_a6_acceleration_fast_tier(criterion):
    rms = _acceleration_mismatch(100_000)
    ok = criterion("A6 (fast tier, n=1e5)", rms <= 0.2, f"phase-space RMS mismatch {rms:.4g} (<= 0.2)")
    assert ok


@pytest.mark.slow
def test_a6_acceleration(criterion):
    rms = _acceleration_mismatch(1_000_000)
    ok = criterion("A6", rms <= 0.1, f"phase-space RMS mismatch {rms:.4g} (<= 0.1) after 1e6 steps")
    assert ok


def test_a7_gradient_correctness(criterion):
    report = run_gradcheck()
    worst = max(c["max_relative_error"] for c in report["cases"].values())
    ok = criterion(
        "A7",
        report["passed"] and worst <= 1e-6 and report["settings"]["instances"] == 100,
        f"max relative error {worst:.3g} (<= 1e-6) over 100 instances per mode",
    )
    assert ok


def test_a8_oracle_equivalence(criterion):
    rng = np.random.default_rng(8)
    worst, mismatched, worst_1d = 0.0, 0, 0.0
    for trial in range(500):
        n = int(rng.integers(1, 9))
        d = int(rng.integers(1, 4))
        if trial % 5 == 0:  # integer lattices force exact ties
            z = rng.integers(0, 3, size=(n, d)).astype(float)
            w = rng.integers(0, 3, size=(n, d)).astype(float)
        else:
            z, w = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        h, b = hungarian_assign(z, w), brute_force_assign(z, w)
        worst = max(worst, abs(h.mean_cost - b.mean_cost))
        mismatched += not np.array_equal(h.permutation, b.permutation)
        if d == 1:
            worst_1d = max(worst_1d, abs(monotone_map_1d(z, w).mean_cost - b.mean_cost))
    ok = criterion(
        "A8",
        worst <= 1e-12 and mismatched == 0 and worst_1d <= 1e-12,
        f"500 instances: max cost difference {worst:.2g}, permutation mismatches {mismatched}, "
        f"1-d monotone max difference {worst_1d:.2g}",
    )
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
