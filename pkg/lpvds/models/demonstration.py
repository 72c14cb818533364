"""
演示数据模型
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..utils.exceptions import DimensionMismatchError


@dataclass
class Trajectory:
    """一条演示轨迹"""
    states: np.ndarray
    velocities: Optional[np.ndarray] = None
    dt: float = 0.01

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[0] == 0:
            raise DimensionMismatchError("轨迹至少需要一个样本")
        if self.velocities is not None:
            self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
            if self.velocities.shape != self.states.shape:
                raise DimensionMismatchError(
                    "速度与状态的形状不一致",
                    states=list(self.states.shape),
                    velocities=list(self.velocities.shape),
                )
        if not self.dt > 0:
            raise DimensionMismatchError("采样周期必须为正", dt=self.dt)

    @property
    def length(self) -> int:
        return int(self.states.shape[0])

    @property
    def dim(self) -> int:
        return int(self.states.shape[1])

    def to_dict(self) -> Dict[str, Any]:
        content = {"states": self.states, "dt": self.dt}
        if self.velocities is not None:
            content["velocities"] = self.velocities
        return content


@dataclass
class DemonstrationSet:
    """演示数据集，平移后平衡点位于原点"""
    trajectories: List[Trajectory]
    n: int
    equilibrium: np.ndarray = None
    shifted: bool = False
    anchored: bool = False

    def __post_init__(self):
        if self.equilibrium is None:
            self.equilibrium = np.zeros(self.n)
        self.equilibrium = np.asarray(self.equilibrium, dtype=float)
        for index, trajectory in enumerate(self.trajectories):
            if trajectory.dim != self.n:
                raise DimensionMismatchError(
                    f"第 {index + 1} 条轨迹维数为 {trajectory.dim}，应为 {self.n}",
                    trajectory=index + 1,
                )

    @property
    def sample_count(self) -> int:
        """样本总数 M"""
        return sum(trajectory.length for trajectory in self.trajectories)

    @property
    def has_velocities(self) -> bool:
        return all(trajectory.velocities is not None for trajectory in self.trajectories)

    def stacked_states(self) -> np.ndarray:
        if not self.trajectories:
            return np.zeros((0, self.n))
        return np.vstack([trajectory.states for trajectory in self.trajectories])

    def stacked_velocities(self) -> np.ndarray:
        if not self.trajectories:
            return np.zeros((0, self.n))
        return np.vstack([trajectory.velocities for trajectory in self.trajectories])

    def max_state_norm(self) -> float:
        states = self.stacked_states()
        if states.shape[0] == 0:
            return 0.0
        return float(np.max(np.linalg.norm(states, axis=1)))

    def start_states(self) -> np.ndarray:
        """每条多样本轨迹的起点"""
        starts = [trajectory.states[0] for trajectory in self.trajectories if trajectory.length > 1]
        if not starts:
            return np.zeros((0, self.n))
        return np.vstack(starts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "equilibrium": self.equilibrium,
            "shifted": self.shifted,
            "trajectories": [trajectory.to_dict() for trajectory in self.trajectories],
        }


@dataclass
class SubsystemData:
    """投影到单个子系统的数据"""
    index: int
    x: np.ndarray
    xdot: np.ndarray
    w: np.ndarray = field(default=None)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.xdot = np.asarray(self.xdot, dtype=float)
        if self.w is None:
            self.w = np.zeros((self.x.shape[0], 0))
        self.w = np.asarray(self.w, dtype=float).reshape(self.x.shape[0], -1)
        if self.xdot.shape != self.x.shape:
            raise DimensionMismatchError("子系统速度与状态形状不一致", index=self.index)

    @property
    def sample_count(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_states(self) -> int:
        return int(self.x.shape[1])

    @property
    def n_inputs(self) -> int:
        return int(self.w.shape[1])
