import json

import numpy as np
import pytest

from lpvds.schemas.topology import TopologyConfig
from lpvds.services.interconnection_service import interconnection_service
from lpvds.utils.exceptions import (
    ConfigValidationError,
    DimensionMismatchError,
    IndexOutOfRangeError,
    NotAPartitionError,
)


class TestBuild:
    def test_two_subsystems_rows(self):
        spec = interconnection_service.build_interconnection(4, [((0, 1), (2,)), ((2, 3), (0, 1))])
        assert spec.N == 2
        expected = np.array([
            [0.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ])
        assert np.array_equal(spec.M, expected)
        assert spec.fanout == pytest.approx([1.0, 1.0, 1.0, 0.0])

    def test_subsystems_sorted_by_smallest_state(self):
        spec = interconnection_service.build_interconnection(3, [((2,), ()), ((0, 1), (2,))])
        assert spec.subsystems[0].state_coords == (0, 1)
        assert spec.subsystems[0].index == 0
        assert spec.subsystems[1].state_coords == (2,)

    def test_stacked_order_for_interleaved_groups(self):
        spec = interconnection_service.build_interconnection(3, [((0, 2), (1,)), ((1,), (0,))])
        assert spec.stacked_order.tolist() == [0, 2, 1]
        assert np.array_equal(spec.stacked_M, spec.M[:, [0, 2, 1]])

    def test_m_stacks_input_subvectors(self, rng):
        groups = [((0, 3), (1, 4)), ((1,), (0, 2, 3)), ((2, 4), (1,))]
        spec = interconnection_service.build_interconnection(5, groups)
        assert np.all(spec.M.sum(axis=1) == 1.0)
        assert set(np.unique(spec.M)) <= {0.0, 1.0}
        for _ in range(20):
            x = rng.normal(size=5)
            w = spec.M @ x
            for subsystem, rows in zip(spec.subsystems, spec.input_slices):
                assert np.array_equal(w[rows], x[list(subsystem.input_coords)])
            assert np.array_equal(spec.stacked_M @ x[spec.stacked_order], w)

    def test_overlapping_states(self):
        with pytest.raises(NotAPartitionError):
            interconnection_service.build_interconnection(2, [((0, 1), ()), ((1,), ())])

    def test_missing_coordinate(self):
        with pytest.raises(NotAPartitionError):
            interconnection_service.build_interconnection(3, [((0,), ()), ((1,), ())])

    def test_input_overlaps_own_state(self):
        with pytest.raises(NotAPartitionError):
            interconnection_service.build_interconnection(2, [((0,), (0,)), ((1,), ())])

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRangeError):
            interconnection_service.build_interconnection(2, [((0,), (5,)), ((1,), ())])

    def test_empty_states(self):
        with pytest.raises(NotAPartitionError):
            interconnection_service.build_interconnection(1, [((), ()), ((0,), ())])


class TestPresets:
    def test_fully_connected_scalar(self):
        spec = interconnection_service.fully_connected_scalar(3)
        assert spec.N == 3
        assert spec.M.shape == (6, 3)
        assert spec.fanout == pytest.approx([2.0, 2.0, 2.0])
        for subsystem in spec.subsystems:
            assert subsystem.n_states == 1
            assert subsystem.n_inputs == 2

    def test_fully_connected_needs_two(self):
        with pytest.raises(DimensionMismatchError):
            interconnection_service.fully_connected_scalar(1)

    def test_monolithic(self):
        spec = interconnection_service.monolithic(3)
        assert spec.N == 1
        assert spec.M.shape == (0, 3)

    def test_internal_inputs(self):
        spec = interconnection_service.fully_connected_scalar(2)
        assert interconnection_service.internal_inputs(spec, np.array([1.0, 2.0])) == pytest.approx([2.0, 1.0])


class TestFromConfig:
    def test_one_based_coordinates(self):
        spec = interconnection_service.from_config({
            "n": 3,
            "subsystems": [{"states": [1, 2], "inputs": [3]}, {"states": [3]}],
        })
        assert spec.subsystems[0].state_coords == (0, 1)
        assert spec.subsystems[0].input_coords == (2,)
        assert spec.to_dict() == {
            "n": 3,
            "subsystems": [{"states": [1, 2], "inputs": [3]}, {"states": [3], "inputs": []}],
        }

    def test_zero_coordinate_out_of_range(self):
        with pytest.raises(IndexOutOfRangeError):
            interconnection_service.from_config({"n": 1, "subsystems": [{"states": [0]}]})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigValidationError):
            interconnection_service.from_config({"n": 1, "subsystems": [{"states": [1]}], "extra": 1})

    def test_resolve_topology_file(self, tmp_path):
        path = tmp_path / "topology.json"
        path.write_text(json.dumps({"n": 2, "subsystems": [{"states": [1, 2]}]}), encoding="utf-8")
        spec = interconnection_service.resolve(str(path), 2)
        assert spec.N == 1

    def test_resolve_dimension_mismatch(self):
        topology = TopologyConfig(n=3, subsystems=[{"states": [1, 2, 3]}])
        with pytest.raises(DimensionMismatchError):
            interconnection_service.resolve(topology, 2)
