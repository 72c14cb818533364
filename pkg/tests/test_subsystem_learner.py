import numpy as np
import pytest

from lpvds.models.demonstration import SubsystemData
from lpvds.schemas.pipeline import SubsystemHyperparams
from lpvds.services.subsystem_learner import subsystem_learner
from lpvds.utils.exceptions import DimensionMismatchError, InsufficientDataError
from tests.helpers import make_subsystem, single_gmm


def coupled_subsystem():
    return make_subsystem(0, [[-2.0]], [[0.3]], [[1.0]], [[0.5]], [[0.3]], [[-1.5]])


def first_coordinate_data(trajectories) -> SubsystemData:
    """COUPLED_A 的第一个坐标，第二个坐标作为输入"""
    states = np.vstack([states for states, _ in trajectories])
    velocities = np.vstack([velocities for _, velocities in trajectories])
    return SubsystemData(index=0, x=states[:, :1], xdot=velocities[:, :1], w=states[:, 1:])


class TestField:
    def test_single_point(self):
        value = subsystem_learner.eval_subsystem_field(coupled_subsystem(), np.array([1.0]), np.array([2.0]))
        assert value == pytest.approx([-1.4])

    def test_batch(self):
        x = np.array([[1.0], [-1.0], [0.0]])
        w = np.array([[0.0], [1.0], [1.0]])
        value = subsystem_learner.eval_subsystem_field(coupled_subsystem(), x, w)
        assert value.shape == (3, 1)
        assert value[:, 0] == pytest.approx([-2.0, 2.3, 0.3])

    def test_wrong_input_dimension(self):
        with pytest.raises(DimensionMismatchError):
            subsystem_learner.eval_subsystem_field(coupled_subsystem(), np.array([1.0]), np.array([1.0, 2.0]))


class TestCertificate:
    def test_dissipation_residual_matches_block(self):
        # x=1, w=0 时残差等于状态块 ξP + 2AP - D22 = -2.4
        residual = subsystem_learner.dissipation_residual(coupled_subsystem(), np.array([1.0]), np.array([0.0]))
        assert residual == pytest.approx(-2.4)

    def test_hand_built_subsystem_passes(self):
        report = subsystem_learner.check_subsystem_certificate(coupled_subsystem())
        assert report.passed
        assert report.get("small_gain[1]").worst_margin == pytest.approx(-0.5)

    def test_indefinite_storage_fails(self):
        model = make_subsystem(0, [[-2.0]], [[0.3]], [[-1.0]], [[0.5]], [[0.3]], [[-1.5]])
        report = subsystem_learner.check_subsystem_certificate(model)
        assert not report.passed
        assert not report.get("storage_lower").passed

    def test_supply_cap_reported(self):
        model = make_subsystem(0, [[-2.0]], [[0.3]], [[1.0]], [[0.5]], [[0.3]], [[-1.5]], d_max=0.1)
        report = subsystem_learner.check_subsystem_certificate(model)
        assert not report.get("supply_cap").passed


class TestLearning:
    def test_initial_fit_recovers_linear_system(self, coupled_trajectories):
        data = first_coordinate_data(coupled_trajectories)
        A, B = subsystem_learner.initial_fit(data, single_gmm(1))
        assert A[0, 0, 0] == pytest.approx(-2.0, abs=1e-5)
        assert B[0, 0, 0] == pytest.approx(0.3, abs=1e-5)

    def test_insufficient_samples(self):
        data = SubsystemData(index=0, x=np.ones((1, 1)), xdot=np.ones((1, 1)))
        with pytest.raises(InsufficientDataError):
            subsystem_learner.initial_fit(data, single_gmm(1))

    def test_learned_subsystem_is_certified(self, coupled_trajectories):
        data = first_coordinate_data(coupled_trajectories)
        model = subsystem_learner.learn_subsystem(data, single_gmm(1), fanout=np.ones(1))
        assert model.objective < 1e-6
        assert model.A[0, 0, 0] == pytest.approx(-2.0, abs=1e-2)
        assert model.pullbacks == 0
        assert subsystem_learner.check_subsystem_certificate(model).passed

    def test_unstable_data_is_pulled_back(self):
        x = np.linspace(-1.0, 1.0, 41)[:, None]
        data = SubsystemData(index=0, x=x, xdot=x.copy())
        model = subsystem_learner.learn_subsystem(data, single_gmm(1), SubsystemHyperparams(max_outer_iter=3))
        assert model.pullbacks >= 1
        assert model.A[0, 0, 0] < 0.0
        assert subsystem_learner.check_subsystem_certificate(model).passed

    def test_fanout_dimension(self, coupled_trajectories):
        data = first_coordinate_data(coupled_trajectories)
        with pytest.raises(DimensionMismatchError):
            subsystem_learner.learn_subsystem(data, single_gmm(1), fanout=np.ones(2))
