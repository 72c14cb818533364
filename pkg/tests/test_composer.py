import json

import numpy as np
import pytest

from lpvds.services.composer import composer
from lpvds.services.interconnection_service import interconnection_service
from lpvds.utils.exceptions import (
    CertificateViolationError,
    CompositionInfeasibleError,
    DimensionMismatchError,
    ModelFormatError,
)
from tests.helpers import COUPLED_A, decoupled_model, make_subsystem


def scalar_supply(index: int, d11: float, d12: float, d22: float):
    return make_subsystem(index, [[-1.0]], [[0.0]], [[1.0]], [[d11]], [[d12]], [[d22]])


def identity_storage_model():
    spec = interconnection_service.monolithic(2)
    subsystem = make_subsystem(0, -np.eye(2), np.zeros((2, 0)), np.eye(2), np.zeros((0, 0)),
                               np.zeros((0, 2)), -np.eye(2))
    return composer.compose(spec, [subsystem], mu=[1.0])


class TestAssemble:
    def test_zero_supply(self):
        subsystems = [scalar_supply(i, 0.0, 0.0, 0.0) for i in range(2)]
        spec = interconnection_service.fully_connected_scalar(2)
        matrix = composer.assemble_certificate_matrix(subsystems, spec.stacked_M, [1.0, 1.0])
        assert np.array_equal(matrix, np.zeros((2, 2)))

    def test_single_subsystem_without_inputs(self):
        subsystem = make_subsystem(0, -np.eye(2), np.zeros((2, 0)), np.eye(2), np.zeros((0, 0)),
                                   np.zeros((0, 2)), [[-1.0, 0.2], [0.2, -3.0]])
        matrix = composer.assemble_certificate_matrix([subsystem], np.zeros((0, 2)), [2.5])
        assert matrix == pytest.approx(2.5 * subsystem.D22)

    def test_exchange_cancels(self):
        subsystems = [scalar_supply(i, 1.0, 0.0, -1.0) for i in range(2)]
        M = np.array([[0.0, 1.0], [1.0, 0.0]])
        matrix = composer.assemble_certificate_matrix(subsystems, M, [1.0, 1.0])
        assert matrix == pytest.approx(np.zeros((2, 2)), abs=1e-15)

    def test_linear_in_mu(self, coupled_model):
        M = coupled_model.spec.stacked_M
        subsystems = coupled_model.subsystems
        first = composer.assemble_certificate_matrix(subsystems, M, [1.0, 2.0])
        second = composer.assemble_certificate_matrix(subsystems, M, [3.0, 0.5])
        combined = composer.assemble_certificate_matrix(subsystems, M, [4.0, 2.5])
        assert combined == pytest.approx(first + second)
        scaled = composer.assemble_certificate_matrix(subsystems, M, [3.0, 6.0])
        assert scaled == pytest.approx(3.0 * first)

    def test_coupled_pair_value(self, coupled_model):
        matrix = composer.assemble_certificate_matrix(coupled_model.subsystems, coupled_model.spec.stacked_M,
                                                      [1.0, 1.0])
        assert matrix == pytest.approx(np.array([[-1.0, 0.6], [0.6, -1.0]]))

    def test_wrong_mu_length(self, coupled_model):
        with pytest.raises(DimensionMismatchError):
            composer.assemble_certificate_matrix(coupled_model.subsystems, coupled_model.spec.stacked_M, [1.0])

    def test_wrong_m_shape(self, coupled_model):
        with pytest.raises(DimensionMismatchError):
            composer.assemble_certificate_matrix(coupled_model.subsystems, np.eye(3), [1.0, 1.0])


class TestSolveMu:
    def test_decoupled_returns_lower_bound(self):
        model = decoupled_model([1.0, 2.0])
        mu, eig = composer.solve_mu(model.subsystems, model.spec.stacked_M, mu_min=2.0)
        assert mu == pytest.approx([2.0, 2.0])
        assert eig == pytest.approx(-2.0)

    def test_coupled_pair(self, coupled_model):
        mu, eig = composer.solve_mu(coupled_model.subsystems, coupled_model.spec.stacked_M)
        assert np.min(mu) == pytest.approx(1.0)
        assert mu == pytest.approx([1.0, 1.0], abs=0.05)
        assert eig < -0.3

    def test_large_gain_is_infeasible(self):
        spec = interconnection_service.fully_connected_scalar(2)
        subsystems = [scalar_supply(i, 5.0, 0.0, -1.0) for i in range(2)]
        with pytest.raises(CompositionInfeasibleError) as info:
            composer.solve_mu(subsystems, spec.stacked_M, spec=spec)
        assert info.value.context["certificate_eig"] > 0.0
        assert len(info.value.witness) == 2


class TestCompose:
    def test_rates(self, coupled_model):
        assert coupled_model.certified
        assert coupled_model.certificate_eig == pytest.approx(-0.4)
        assert coupled_model.rates.to_dict() == pytest.approx({"delta_lo": 0.5, "delta_hi": 4.0, "xi": 0.1})
        assert coupled_model.nominal_rates.to_dict() == pytest.approx({"delta_lo": 1.0, "delta_hi": 4.0, "xi": 0.1})

    def test_solves_mu_when_missing(self, coupled_model):
        model = composer.compose(coupled_model.spec, coupled_model.subsystems)
        assert model.certified
        assert np.min(model.mu) == pytest.approx(1.0)

    def test_violation_raised(self):
        spec = interconnection_service.fully_connected_scalar(2)
        subsystems = [scalar_supply(i, 5.0, 0.0, -1.0) for i in range(2)]
        with pytest.raises(CertificateViolationError):
            composer.compose(spec, subsystems, mu=[1.0, 1.0])

    def test_uncertified_model_allowed(self):
        spec = interconnection_service.fully_connected_scalar(2)
        subsystems = [scalar_supply(i, 5.0, 0.0, -1.0) for i in range(2)]
        model = composer.compose(spec, subsystems, mu=[1.0, 1.0], require_certificate=False)
        assert not model.certified
        assert model.certificate_eig == pytest.approx(4.0)

    def test_subsystem_count_mismatch(self, coupled_model):
        with pytest.raises(DimensionMismatchError):
            composer.compose(coupled_model.spec, coupled_model.subsystems[:1], mu=[1.0])


class TestGlobalFunctions:
    def test_field_at_origin(self, coupled_model):
        assert np.array_equal(composer.global_field(coupled_model, np.zeros(2)), np.zeros(2))

    def test_field_matches_linear_system(self, coupled_model, rng):
        points = rng.normal(size=(20, 2))
        assert composer.global_field(coupled_model, points) == pytest.approx(points @ COUPLED_A.T)

    def test_linear_matrix(self, coupled_model):
        assert composer.global_linear_matrix(coupled_model) == pytest.approx(COUPLED_A)

    def test_identity_lyapunov(self):
        value, gradient = composer.global_lyapunov(identity_storage_model(), np.array([1.0, 1.0]))
        assert value == pytest.approx(2.0)
        assert gradient == pytest.approx([2.0, 2.0])

    def test_decoupled_lyapunov_is_weighted_sum(self):
        model = decoupled_model([1.0, 3.0])
        model.mu = np.array([1.0, 2.0])
        value, _ = composer.global_lyapunov(model, np.array([2.0, -1.0]))
        assert value == pytest.approx(4.0 + 2.0)

    def test_gradient_matches_finite_difference(self, coupled_model, rng):
        coupled_model.mu = np.array([1.0, 1.7])
        x = rng.normal(size=2)
        _, gradient = composer.global_lyapunov(coupled_model, x)
        step = 1e-6
        numeric = np.array([
            (composer.global_lyapunov(coupled_model, x + step * e)[0]
             - composer.global_lyapunov(coupled_model, x - step * e)[0]) / (2.0 * step)
            for e in np.eye(2)
        ])
        assert gradient == pytest.approx(numeric, abs=1e-6)

    def test_dimension_mismatch(self, coupled_model):
        with pytest.raises(DimensionMismatchError):
            composer.global_field(coupled_model, np.zeros(3))


class TestPersistence:
    def test_round_trip(self, coupled_model, tmp_path, rng):
        coupled_model.equilibrium = np.array([1.0, -1.0])
        path = composer.save_model(coupled_model, tmp_path / "model.json")
        restored = composer.load_model(path)
        assert restored.mu == pytest.approx(coupled_model.mu)
        assert restored.equilibrium == pytest.approx([1.0, -1.0])
        assert restored.rates == coupled_model.rates
        points = rng.normal(size=(5, 2))
        assert composer.global_field(restored, points) == pytest.approx(composer.global_field(coupled_model, points))

    def test_missing_topology(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"format": "lpvds-composed/1"}), encoding="utf-8")
        with pytest.raises(ModelFormatError):
            composer.load_model(path)

    def test_unknown_format(self, coupled_model, tmp_path):
        path = composer.save_model(coupled_model, tmp_path / "model.json")
        document = json.loads(path.read_text(encoding="utf-8"))
        document["format"] = "other"
        path.write_text(json.dumps(document), encoding="utf-8")
        with pytest.raises(ModelFormatError):
            composer.load_model(path)
