"""
仿真轨迹模型
"""
import enum
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np


class Termination(str, enum.Enum):
    """仿真终止原因"""
    CONVERGED = "Converged"
    TIME_LIMIT = "TimeLimit"
    DIVERGED = "Diverged"


@dataclass
class Rollout:
    """一次数值积分得到的轨迹"""
    times: np.ndarray
    states: np.ndarray
    lyapunov_values: np.ndarray
    terminated: Termination

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "terminated": self.terminated.value,
            "times": self.times,
            "states": self.states,
            "lyapunov_values": self.lyapunov_values,
        }
