import csv
import json

import numpy as np
import pytest

from blobtransport.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from blobtransport.config import ConfigError, ExperimentConfig
from blobtransport.energy import TrajectoryField
from blobtransport.experiments import (
    run_convergence,
    run_experiment,
    run_gradcheck,
    run_landscape,
)
from blobtransport.gradients import objective_gradient
from blobtransport.optimize import LossTrace
from blobtransport.oracle import continuum_geodesic
from blobtransport.presets import LANDSCAPE_DELTAS, LANDSCAPE_EPSILONS, preset


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_run_writes_outputs(tmp_path):
    cfg = ExperimentConfig.parse(preset("comparison", max_steps=50))
    report = run_experiment(cfg, tmp_path)
    rows = read_csv(tmp_path / "trajectories.csv")
    assert rows[0] == ["particle_index", "knot_index", "t", "coord_0", "coord_1"]
    assert len(rows) == 30 * 3 + 1
    loss = read_csv(tmp_path / "loss.csv")
    assert loss[0] == ["iter", "total", "kinetic_or_cc", "potential", "nonlocal", "lr"]
    assert len(loss) == 52
    on_disk = json.loads((tmp_path / "report.json").read_text())
    assert on_disk["status"] == "ok"
    assert on_disk["resolved_config"]["problem"]["delta"] == pytest.approx(30**-0.495)
    assert on_disk["resolved_config"]["optimizer"]["alpha"] == 0.01
    assert "PCG64" in on_disk["rng"]
    for key in ("hungarian_mean_cost", "full_objective", "relative_gap", "terminal_penalty_full"):
        assert key in report["metrics"]


def test_zero_steps_echoes_initialization(tmp_path):
    cfg = ExperimentConfig.parse(preset("comparison", max_steps=0))
    report = run_experiment(cfg, tmp_path)
    assert report["loss"]["initial"] == report["loss"]["best"] == report["loss"]["last"]
    assert report["loss"]["steps_taken"] == 0


def test_refuses_overwrite(tmp_path):
    cfg = ExperimentConfig.parse(preset("comparison", max_steps=1))
    run_experiment(cfg, tmp_path)
    with pytest.raises(ConfigError):
        run_experiment(cfg, tmp_path)
    run_experiment(cfg, tmp_path, overwrite=True)


def test_round_trip_is_bitwise(tmp_path):
    cfg = ExperimentConfig.parse(preset("obstacle", max_steps=200))
    report = run_experiment(cfg, tmp_path / "a")
    again = ExperimentConfig.parse(report["resolved_config"])
    run_experiment(again, tmp_path / "b")
    for name in ("trajectories.csv", "loss.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_acceleration_outputs_velocities(tmp_path):
    cfg = ExperimentConfig.parse(preset("acceleration", max_steps=20))
    report = run_experiment(cfg, tmp_path)
    rows = read_csv(tmp_path / "trajectories.csv")
    assert rows[0][-1] == "vel_0" and len(rows) == 10 * 11 + 1
    assert "terminal_rms_mismatch" in report["metrics"]


def test_error_trace(tmp_path):
    cfg = ExperimentConfig.parse(preset("error_decay", max_steps=2000))
    report = run_experiment(cfg, tmp_path)
    rows = read_csv(tmp_path / "errors.csv")
    assert rows[0] == ["iter", "error_all_times", "error_terminal"]
    assert [r[0] for r in rows[1:]] == ["0", "1000", "2000"]
    assert float(rows[1][2]) == pytest.approx(0.15174424466672, abs=1e-12)
    assert report["metrics"]["error_terminal"] < float(rows[1][2])


def test_numerical_failure_flags_partial_outputs(tmp_path):
    raw = preset("landscape")
    raw["experiment"] = "custom"
    raw.pop("landscape")
    raw["problem"]["source"]["points"] = [[0.0], [1e200]]
    raw["optimizer"] = {"alpha": 1.0, "max_steps": 10}
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps(raw))
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "out")]) == EXIT_NUMERICAL
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["status"] == "numerical_failure"
    assert (tmp_path / "out" / "trajectories.csv").exists()


class TestLandscape:
    @pytest.mark.parametrize("delta", LANDSCAPE_DELTAS)
    @pytest.mark.parametrize("eps", LANDSCAPE_EPSILONS)
    def test_markers(self, tmp_path, delta, eps):
        raw = preset("landscape", delta=delta, epsilon=eps)
        raw["landscape"]["grid_size"] = 11
        report = run_landscape(ExperimentConfig.parse(raw), tmp_path)
        m = report["markers"]
        assert m["target"]["total"] < m["flipped"]["total"]
        assert m["target"]["nonlocal"] == m["flipped"]["nonlocal"]
        assert m["target"]["terminal_penalty_full"] == pytest.approx(0.0, abs=1e-12)
        assert m["flipped"]["terminal_penalty_full"] == pytest.approx(0.0, abs=1e-12)
        assert (m["initialization"]["y_1_2"], m["initialization"]["y_2_2"]) == (1.25, 1.25)
        assert m["source"]["kinetic"] == 0.0
        rows = read_csv(tmp_path / "landscape.csv")
        assert len(rows) == 11 * 11 + 1

    def test_requires_landscape_config(self, tmp_path):
        with pytest.raises(ConfigError):
            run_landscape(ExperimentConfig.parse(preset("comparison")), tmp_path)


class TestConvergence:
    def test_exact_solver_is_degenerate(self, tmp_path):
        def exact(init, spec, opt):
            y0 = init.values[:, :1, :]
            t = np.linspace(0, 1, init.n_times)[None, :, None]
            trace = LossTrace(1)
            from blobtransport.energy import energy_terms

            tf = TrajectoryField(continuum_geodesic(y0, t))
            trace.append(0, energy_terms(tf, spec), opt.learning_rate)
            return tf, trace

        cfg = ExperimentConfig.parse(preset("convergence", n_values=[5, 10, 20], max_steps=0))
        report = run_convergence(cfg, tmp_path, solver=exact)
        assert all(r["error_terminal"] == 0.0 for r in report["runs"])
        assert report["degenerate"] and report["slope"] is None

    def test_two_point_smoke(self, tmp_path):
        cfg = ExperimentConfig.parse(preset("convergence", n_values=[5, 10], max_steps=10_000))
        report = run_convergence(cfg, tmp_path)
        assert np.isfinite(report["slope"]) and report["slope"] < 0
        rows = read_csv(tmp_path / "convergence.csv")
        assert [r[0] for r in rows[1:]] == ["5", "10"]

    def test_threads_agree(self, tmp_path):
        cfg = ExperimentConfig.parse(preset("convergence", n_values=[5, 6], max_steps=300))
        a = run_convergence(cfg, tmp_path / "a", threads=1)
        cfg = ExperimentConfig.parse(preset("convergence", n_values=[5, 6], max_steps=300))
        b = run_convergence(cfg, tmp_path / "b", threads=2)
        assert [r["error_terminal"] for r in a["runs"]] == [r["error_terminal"] for r in b["runs"]]


class TestGradcheck:
    def test_default_passes(self):
        report = run_gradcheck(ExperimentConfig.parse({"experiment": "gradcheck", "gradcheck": {"instances": 10}}))
        assert report["passed"]
        assert report["cases"]["stationary"]["max_abs_gradient"] == 0.0

    def test_corrupted_gradient_fails(self):
        def broken(traj, spec):
            g = objective_gradient(traj, spec)
            g[:, -1] *= -1.0
            return g

        cfg = ExperimentConfig.parse({"experiment": "gradcheck", "gradcheck": {"instances": 3}})
        report = run_gradcheck(cfg, gradient_fn=broken)
        assert not report["passed"]


class TestCli:
    def test_run_and_exit_codes(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(preset("comparison", max_steps=5)))
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--overwrite"]) == EXIT_OK
        out = capsys.readouterr().out
        assert '"status": "ok"' in out

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "c.json"
        raw = preset("comparison")
        raw["problem"]["bogus"] = 1
        cfg.write_text(json.dumps(raw))
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert main(["run", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_wrong_subcommand(self, tmp_path):
        assert main(["run", "preset:landscape", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert main(["gradcheck", "preset:comparison"]) == EXIT_CONFIG

    def test_missing_output_dir(self):
        assert main(["run", "preset:comparison"]) == EXIT_CONFIG

    def test_presets_listing(self, capsys):
        assert main(["presets"]) == EXIT_OK
        assert "obstacle" in capsys.readouterr().out

    def test_landscape_and_gradcheck(self, tmp_path):
        assert main(["landscape", "preset:landscape", "--out", str(tmp_path / "l")]) == EXIT_OK
        assert (tmp_path / "l" / "landscape.csv").exists()
        cfg = tmp_path / "g.json"
        cfg.write_text(json.dumps({"experiment": "gradcheck", "gradcheck": {"instances": 2}}))
        assert main(["gradcheck", str(cfg), "--out", str(tmp_path / "g")]) == EXIT_OK
