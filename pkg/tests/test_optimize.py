import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blobtransport.energy import (
    ACCELERATION,
    VELOCITY,
    EmpiricalTarget,
    GaussianTarget,
    ProblemSpec,
    TrajectoryField,
    total_objective,
)
from blobtransport.experiments import stationary_instance
from blobtransport.kernels import Mollifier
from blobtransport.optimize import (
    LossTrace,
    OptimizationError,
    OptimizerConfig,
    gd_run,
    init_acceleration,
    init_straight_lines,
)


def small_problem(seed=1, n=3):
    rng = np.random.default_rng(seed)
    z = rng.uniform(0, 1, (n, 2))
    spec = ProblemSpec(VELOCITY, 0.01, Mollifier(0.3, 2), EmpiricalTarget(rng.uniform(1, 2, (n, 2))))
    return z, spec, rng


class TestInit:
    def test_single_point_target(self):
        tf = init_straight_lines([[0.0, 0.0], [1.0, 1.0]], EmpiricalTarget([[2.0, 4.0]] * 2), 3)
        assert np.allclose(tf.values[0], [[0, 0], [1, 2], [2, 4]])
        assert np.allclose(tf.values[1], [[1, 1], [1.5, 2.5], [2, 4]])

    def test_center_of_mass_example(self):
        tf = init_straight_lines([[0.0]], EmpiricalTarget([[1.0], [1.5]]), 3)
        assert np.allclose(tf.values[0, :, 0], [0, 0.625, 1.25])

    def test_gaussian_mean(self):
        tf = init_straight_lines(np.zeros((4, 2)), GaussianTarget([1.5, 1.5], 0.5), 5)
        assert np.array_equal(tf.terminal, np.full((4, 2), 1.5))

    def test_acceleration_examples(self):
        phase = EmpiricalTarget([[2.0, 0.0]])
        tf = init_acceleration([[0.0]], [[1.0]], phase, 3)
        assert np.allclose(tf.values[0, :, 0], [0, 0.5, 2])
        tf = init_acceleration([[0.0]], [[0.0]], EmpiricalTarget([[2.0, 1.0], [2.5, -1.0]]), 5)
        assert np.allclose(tf.values[0, :, 0], [0, 0, 0.75, 1.5, 2.25])
        assert tf.frozen_knots == 2

    def test_acceleration_stationary(self):
        tf = init_acceleration([[0.4]], [[0.0]], EmpiricalTarget([[0.4, 0.0]]), 6)
        assert np.all(tf.values == 0.4)

    def test_too_few_knots(self):
        with pytest.raises(ValueError):
            init_straight_lines([[0.0]], EmpiricalTarget([[1.0]]), 1)
        with pytest.raises(ValueError):
            init_acceleration([[0.0]], [[0.0]], EmpiricalTarget([[1.0, 0.0]]), 2)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": 0.0},
            {"max_steps": -1},
            {"lr_reduce_factor": 1.0},
            {"lr_reduce_patience": 0},
            {"early_stop_patience": 0},
            {"lr_floor": -1.0},
            {"seed": -1},
        ],
    )
    def test_rejects(self, kwargs):
        base = {"learning_rate": 0.1, "max_steps": 1}
        base.update(kwargs)
        with pytest.raises(ValueError):
            OptimizerConfig(**base)


class TestLoop:
    def test_zero_steps(self):
        z, spec, _ = small_problem()
        init = init_straight_lines(z, spec.target, 4)
        out, trace = gd_run(init, spec, OptimizerConfig(0.01, 0))
        assert np.array_equal(out.values, init.values)
        assert len(trace) == 1
        assert trace.record(0)["total"] == pytest.approx(total_objective(init, spec), rel=1e-13)

    def test_stationary_stops_early(self):
        init, spec = stationary_instance()
        out, trace = gd_run(init, spec, OptimizerConfig(0.1, 100))
        assert np.array_equal(out.values, init.values)
        assert trace.stopped_early
        assert len(trace) == 1 + 5

    def test_returns_best_iterate(self):
        z, spec, _ = small_problem()
        init = init_straight_lines(z, spec.target, 4)
        out, trace = gd_run(init, spec, OptimizerConfig(0.01, 300))
        best = trace.total.min()
        assert total_objective(out, spec) == pytest.approx(best, rel=1e-12)
        assert best <= trace.total[0]

    def test_frozen_knots_untouched(self):
        z, spec, _ = small_problem()
        init = init_straight_lines(z, spec.target, 4)
        out, _ = gd_run(init, spec, OptimizerConfig(0.01, 50))
        assert np.array_equal(out.values[:, 0], init.values[:, 0])

    def test_acceleration_frozen_knots(self):
        tgt = EmpiricalTarget([[2.0, 1.0], [2.5, -1.0]])
        spec = ProblemSpec(ACCELERATION, 0.1, Mollifier(0.5, 2), tgt, initial_velocities=[[0.3], [-0.2]])
        init = init_acceleration([[0.0], [1.0]], [[0.3], [-0.2]], tgt, 6)
        out, _ = gd_run(init, spec, OptimizerConfig(1e-4, 200))
        assert np.array_equal(out.values[:, :2], init.values[:, :2])

    def test_deterministic(self):
        z, spec, _ = small_problem()
        init = init_straight_lines(z, spec.target, 4)
        a, ta = gd_run(init, spec, OptimizerConfig(0.01, 200))
        b, tb = gd_run(init, spec, OptimizerConfig(0.01, 200))
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(ta.array, tb.array)

    def test_strictly_decreasing_prefix(self):
        z, spec, _ = small_problem()
        init = init_straight_lines(z, spec.target, 4)
        _, trace = gd_run(init, spec, OptimizerConfig(0.005, 300))
        totals = trace.total
        lr = trace.column("lr")
        first_bad = next((i for i in range(1, len(totals)) if totals[i] >= totals[:i].min() - 1e-12), len(totals))
        assert np.all(lr[:first_bad] == lr[0])
        assert np.all(np.diff(totals[:first_bad]) < 0)

    def test_lr_reduction_and_floor(self):
        # a step size far too large makes the loss oscillate, forcing reductions
        z, spec, _ = small_problem()
        init = init_straight_lines(z, spec.target, 4)
        cfg = OptimizerConfig(5.0, 400, early_stop_patience=10**6, lr_floor=1e-3)
        _, trace = gd_run(init, spec, cfg)
        lrs = np.unique(trace.column("lr"))
        assert lrs.min() >= 1e-3
        assert len(lrs) > 1
        assert np.allclose(np.sort(lrs)[::-1] / 5.0, 0.2 ** np.arange(len(lrs)))

    def test_non_finite_raises_with_state(self):
        spec = ProblemSpec(VELOCITY, 1.0, Mollifier(1.0, 1), EmpiricalTarget([[0.0]]), nonlocal_enabled=False)
        init = TrajectoryField(np.array([[[0.0], [1e300], [0.0]]]))
        with pytest.raises(OptimizationError) as info:
            gd_run(init, spec, OptimizerConfig(1.0, 10))
        assert isinstance(info.value.trace, LossTrace)
        assert np.all(np.isfinite(info.value.traj.values))

    def test_callback_sees_every_state(self):
        z, spec, _ = small_problem()
        seen = []
        gd_run(init_straight_lines(z, spec.target, 3), spec, OptimizerConfig(0.01, 7, early_stop_patience=100), lambda i, v: seen.append(i))
        assert seen == list(range(8))

    def test_trace_grows_past_capacity(self):
        tr = LossTrace(1)
        z, spec, _ = small_problem()
        from blobtransport.energy import energy_terms

        terms = energy_terms(init_straight_lines(z, spec.target, 3), spec)
        for i in range(5):
            tr.append(i, terms, 0.1)
        assert list(tr.iterations) == [0, 1, 2, 3, 4]


def test_straight_line_optimality():
    z, spec, rng = small_problem()
    init = init_straight_lines(z, spec.target, 5)
    init.values[:, 1:-1] += rng.normal(scale=0.2, size=(3, 3, 2))
    out, _ = gd_run(init, spec, OptimizerConfig(0.02, 5000))
    y = out.values
    s = np.linspace(0, 1, 5)[None, :, None]
    chord = (1 - s) * y[:, :1] + s * y[:, -1:]
    dev = np.linalg.norm(y - chord, axis=-1).max(axis=1)
    assert np.all(dev <= 1e-3 * np.linalg.norm(y[:, -1] - y[:, 0], axis=-1))


@given(st.integers(0, 2**32 - 1), st.integers(0, 30))
def test_best_never_worse_than_init(seed, steps):
    z, spec, _ = small_problem(seed, n=2)
    init = init_straight_lines(z, spec.target, 3)
    out, trace = gd_run(init, spec, OptimizerConfig(0.01, steps))
    assert total_objective(out, spec) <= total_objective(init, spec) + 1e-12
    assert np.all(np.diff(trace.iterations) == 1)
