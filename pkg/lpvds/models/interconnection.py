"""
子系统划分与互联矩阵模型
内存中的坐标从0开始，对外的拓扑文档从1开始
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, Tuple

import numpy as np


@dataclass(frozen=True)
class SubsystemSpec:
    """子系统的状态坐标和内部输入坐标"""
    index: int
    state_coords: Tuple[int, ...]
    input_coords: Tuple[int, ...] = ()

    @property
    def n_states(self) -> int:
        return len(self.state_coords)

    @property
    def n_inputs(self) -> int:
        return len(self.input_coords)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "states": [c + 1 for c in self.state_coords],
            "inputs": [c + 1 for c in self.input_coords],
        }


@dataclass(frozen=True, eq=False)
class InterconnectionSpec:
    """互联结构，M 按行分组对应各子系统的内部输入"""
    n: int
    subsystems: Tuple[SubsystemSpec, ...]
    M: np.ndarray

    @property
    def N(self) -> int:
        return len(self.subsystems)

    @cached_property
    def input_slices(self) -> List[slice]:
        """M 中属于各子系统的行区间"""
        slices = []
        offset = 0
        for subsystem in self.subsystems:
            slices.append(slice(offset, offset + subsystem.n_inputs))
            offset += subsystem.n_inputs
        return slices

    @cached_property
    def stacked_order(self) -> np.ndarray:
        """按子系统顺序拼接的全局坐标"""
        return np.array([c for s in self.subsystems for c in s.state_coords], dtype=int)

    @cached_property
    def stacked_M(self) -> np.ndarray:
        """列按子系统状态拼接顺序排列的 M"""
        return self.M[:, self.stacked_order]

    @cached_property
    def fanout(self) -> np.ndarray:
        """每个全局坐标被多少行读取"""
        return self.M.sum(axis=0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "subsystems": [subsystem.to_dict() for subsystem in self.subsystems],
        }
