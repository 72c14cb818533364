import numpy as np
import pandas as pd
import pytest
from scipy.linalg import expm

from lpvds.models.demonstration import DemonstrationSet, Trajectory
from lpvds.models.rollout import Termination
from lpvds.services.composer import composer
from lpvds.services.simulator import simulator
from lpvds.utils.exceptions import ConfigValidationError, DimensionMismatchError, NotShiftedError
from tests.helpers import decoupled_model, scalar_model, zero_model


def shifted_set(states: np.ndarray, velocities: np.ndarray) -> DemonstrationSet:
    return DemonstrationSet(
        trajectories=[Trajectory(states=states, velocities=velocities, dt=0.1)],
        n=states.shape[1],
        shifted=True,
    )


class TestRollout:
    def test_origin_converges_immediately(self, coupled_model):
        rollout = simulator.rollout(coupled_model, np.zeros(2))
        assert rollout.terminated == Termination.CONVERGED
        assert rollout.states.shape == (1, 2)

    def test_exponential_decay_accuracy(self):
        rollout = simulator.rollout(scalar_model(1.0), [1.0], t_max=1.0, dt=0.01, conv_radius=0.0)
        assert rollout.terminated == Termination.TIME_LIMIT
        assert rollout.times[-1] == pytest.approx(1.0)
        assert rollout.final_state[0] == pytest.approx(np.exp(-1.0), abs=1e-6)

    def test_fourth_order_convergence(self, coupled_model):
        start = np.array([1.0, -0.5])
        exact = expm(composer.global_linear_matrix(coupled_model)) @ start
        errors = []
        for dt in (0.1, 0.05, 0.025):
            rollout = simulator.rollout(coupled_model, start, t_max=1.0, dt=dt, conv_radius=0.0)
            errors.append(np.linalg.norm(rollout.final_state - exact))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 3.5)

    def test_converges_before_time_limit(self):
        rollout = simulator.rollout(scalar_model(1.0), [1.0], t_max=10.0, dt=0.01)
        assert rollout.terminated == Termination.CONVERGED
        assert rollout.times[-1] < 10.0
        assert abs(rollout.final_state[0]) <= 1e-3

    def test_unstable_model_diverges(self):
        rollout = simulator.rollout(decoupled_model([-1.0]), [1.0], t_max=20.0, dt=0.01)
        assert rollout.terminated == Termination.DIVERGED
        assert abs(rollout.final_state[0]) > 1e6

    def test_lyapunov_decreases(self, coupled_model):
        rollout = simulator.rollout(coupled_model, [1.0, -0.5], t_max=2.0, dt=0.01)
        assert np.all(np.diff(rollout.lyapunov_values) < 0.0)

    def test_non_positive_dt(self, coupled_model):
        with pytest.raises(ConfigValidationError) as info:
            simulator.rollout(coupled_model, [1.0, 0.0], dt=0.0)
        assert info.value.context["field"] == "dt"

    def test_time_limit_below_step(self, coupled_model):
        with pytest.raises(ConfigValidationError):
            simulator.rollout(coupled_model, [1.0, 0.0], t_max=0.001, dt=0.01)

    def test_start_dimension(self, coupled_model):
        with pytest.raises(DimensionMismatchError):
            simulator.rollout(coupled_model, [1.0])


class TestErrors:
    def test_zero_field_with_unit_velocities(self, rng):
        demonstrations = shifted_set(rng.normal(size=(7, 1)), np.ones((7, 1)))
        assert simulator.mse(zero_model(1), demonstrations) == pytest.approx(1.0)

    def test_residual_sums_add_up(self, coupled_model, rng):
        states = rng.normal(size=(30, 2))
        demonstrations = shifted_set(states, rng.normal(size=(30, 2)))
        sums = simulator.subsystem_residual_sums(coupled_model, demonstrations)
        assert sums.shape == (2,)
        assert np.sum(sums) == pytest.approx(30 * simulator.mse(coupled_model, demonstrations))

    def test_requires_shift(self, coupled_model):
        demonstrations = shifted_set(np.zeros((3, 2)), np.zeros((3, 2)))
        demonstrations.shifted = False
        with pytest.raises(NotShiftedError):
            simulator.mse(coupled_model, demonstrations)


class TestExport:
    def test_empty_export_has_header_only(self, tmp_path):
        path = simulator.export_plot_data([], None, tmp_path / "plot.csv", n=2)
        assert path.read_text(encoding="utf-8").strip() == "kind,index,time,x1,x2,V"

    def test_rollouts_and_demos(self, coupled_model, tmp_path):
        rollout = simulator.rollout(coupled_model, [1.0, 0.5], t_max=0.1, dt=0.01)
        demonstrations = shifted_set(np.ones((4, 2)), np.zeros((4, 2)))
        path = simulator.export_plot_data([rollout], demonstrations, tmp_path / "out" / "plot.csv")
        table = pd.read_csv(path)
        assert list(table.columns) == ["kind", "index", "time", "x1", "x2", "V"]
        rollouts = table[table["kind"] == "rollout"]
        demos = table[table["kind"] == "demo"]
        assert len(rollouts) == len(rollout.times)
        assert len(demos) == 4
        assert demos["V"].isna().all()
        assert rollouts["V"].to_numpy() == pytest.approx(rollout.lyapunov_values)
