"""
公共测试夹具
"""
import numpy as np
import pytest

from tests.helpers import COUPLED_A, coupled_pair_model, linear_trajectories, write_json_demos


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def coupled_model():
    return coupled_pair_model()


@pytest.fixture
def coupled_trajectories():
    """COUPLED_A 的三条精确轨迹"""
    return linear_trajectories(COUPLED_A, [[1.0, 0.5], [-0.8, 1.2], [0.6, -1.0]], dt=0.05, steps=60)


@pytest.fixture
def coupled_data_file(tmp_path, coupled_trajectories):
    """平衡点为 (1, -1) 的JSON演示文件"""
    return write_json_demos(tmp_path / "demos.json", coupled_trajectories, dt=0.05, offset=[1.0, -1.0])
