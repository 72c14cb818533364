"""
半定规划数据模型
"""
import enum
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..utils.exceptions import InvalidProblemError

# 对称矩阵统一用二维ndarray承载，构造时经过对称化
SymMat = np.ndarray


class SolverStatus(str, enum.Enum):
    """求解状态枚举"""
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"


@dataclass(frozen=True)
class AffineBlock:
    """仿射对称矩阵映射 z ↦ F0 + Σ z_l F_l，要求 ⪯ -ε·I"""
    constant: np.ndarray
    coefficients: np.ndarray
    name: str = ""

    @property
    def size(self) -> int:
        return int(self.constant.shape[0])

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """在 z 处求值"""
        if self.coefficients.shape[0] == 0:
            return self.constant.copy()
        return self.constant + np.tensordot(z, self.coefficients, axes=1)


@dataclass(frozen=True)
class QuadraticObjective:
    """凸二次目标 ½zᵀHz + gᵀz + c"""
    hessian: np.ndarray
    linear: np.ndarray
    constant: float = 0.0

    def value(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.hessian @ z + self.linear @ z + self.constant)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self.hessian @ z + self.linear

    @classmethod
    def linear_only(cls, linear: np.ndarray) -> "QuadraticObjective":
        """纯线性目标"""
        linear = np.asarray(linear, dtype=float)
        dim = linear.shape[0]
        return cls(hessian=np.zeros((dim, dim)), linear=linear, constant=0.0)


@dataclass
class SdpProblem:
    """半定规划问题"""
    decision_dim: int
    objective: QuadraticObjective
    blocks: List[AffineBlock] = field(default_factory=list)
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    epsilon_strict: float = 0.0
    initial_z: Optional[np.ndarray] = None

    def __post_init__(self):
        m = self.decision_dim
        if m < 0:
            raise InvalidProblemError("决策变量维数不能为负", decision_dim=m)
        if self.lower is None:
            self.lower = np.full(m, -np.inf)
        if self.upper is None:
            self.upper = np.full(m, np.inf)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (m,) or self.upper.shape != (m,):
            raise InvalidProblemError("变量上下界维数与决策变量不符", decision_dim=m)
        if np.any(self.lower >= self.upper):
            raise InvalidProblemError("变量下界必须严格小于上界")
        if self.epsilon_strict < 0:
            raise InvalidProblemError("epsilon_strict 必须非负", epsilon_strict=self.epsilon_strict)

        hessian = np.asarray(self.objective.hessian, dtype=float)
        if hessian.shape != (m, m) or np.asarray(self.objective.linear).shape != (m,):
            raise InvalidProblemError("目标函数维数与决策变量不符", decision_dim=m)
        if m > 0:
            scale = max(1.0, float(np.max(np.abs(hessian))))
            lowest = float(np.linalg.eigvalsh(0.5 * (hessian + hessian.T))[0])
            if lowest < -1e-10 * scale:
                raise InvalidProblemError("目标函数Hessian不是半正定的", min_eig=lowest)

        for block in self.blocks:
            b = block.size
            if block.constant.shape != (b, b) or block.coefficients.shape != (m, b, b):
                raise InvalidProblemError(
                    f"约束块 '{block.name}' 的系数形状不正确",
                    block=block.name,
                )
            if not np.array_equal(block.constant, block.constant.T) or \
                    not np.array_equal(block.coefficients, np.transpose(block.coefficients, (0, 2, 1))):
                raise InvalidProblemError(f"约束块 '{block.name}' 不对称", block=block.name)

        if self.initial_z is not None:
            self.initial_z = np.asarray(self.initial_z, dtype=float)
            if self.initial_z.shape != (m,):
                raise InvalidProblemError("初始点维数与决策变量不符", decision_dim=m)


@dataclass
class SdpSolution:
    """半定规划求解结果"""
    z: np.ndarray
    objective_value: float
    status: SolverStatus
    max_block_eig: float
    block_eigs: List[float] = field(default_factory=list)
    newton_steps: int = 0

    @property
    def succeeded(self) -> bool:
        return self.status in (SolverStatus.OPTIMAL, SolverStatus.FEASIBLE)
