"""
子系统模型
f_i(x, w) = Σ_k γ_k(x)(A_k x + B_k w)，存储函数 V_i(x) = xᵀ P x，供给率矩阵 D
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from ..utils.exceptions import ModelFormatError
from ..utils.serialization import as_matrix
from .gmm import GmmModel


def small_gain_matrix(P: np.ndarray, A: np.ndarray, B: np.ndarray, D11: np.ndarray,
                      D12: np.ndarray, D22: np.ndarray, xi: float) -> np.ndarray:
    """
    耗散矩阵不等式左端，按 [w; x] 排列

    [[-D11, BᵀP - D12], [PB - D21, ξP + AᵀP + PA - D22]]
    """
    coupling = B.T @ P - D12
    state = xi * P + A.T @ P + P @ A - D22
    block = np.block([[-D11, coupling], [coupling.T, state]])
    return 0.5 * (block + block.T)


@dataclass(frozen=True)
class SubsystemRates:
    """存储函数界与衰减率 (δ̲, δ̄, ξ)"""
    delta_lo: float
    delta_hi: float
    xi: float

    def to_dict(self) -> Dict[str, float]:
        return {"delta_lo": self.delta_lo, "delta_hi": self.delta_hi, "xi": self.xi}


@dataclass
class SubsystemModel:
    """学习得到的子系统"""
    index: int
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D22: np.ndarray
    rates: SubsystemRates
    gmm: GmmModel
    objective: float = float("nan")
    epsilon_strict: float = 0.0
    objective_history: List[float] = field(default_factory=list)
    pullbacks: int = 0
    stage_p_margin: float = float("nan")
    d_max: float = float("inf")

    @property
    def K(self) -> int:
        return int(self.A.shape[0])

    @property
    def n_states(self) -> int:
        return int(self.A.shape[1])

    @property
    def n_inputs(self) -> int:
        return int(self.B.shape[2])

    @property
    def D(self) -> np.ndarray:
        """按 [w; x] 排列的对称供给率矩阵"""
        return np.block([[self.D11, self.D12], [self.D12.T, self.D22]])

    def small_gain_block(self, k: int) -> np.ndarray:
        """第 k 个分量的耗散矩阵不等式左端，按 [w; x] 排列"""
        return small_gain_matrix(self.P, self.A[k], self.B[k], self.D11, self.D12, self.D22, self.rates.xi)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index + 1,
            "K": self.K,
            "A": self.A,
            "B": self.B,
            "P": self.P,
            "D11": self.D11,
            "D12": self.D12,
            "D22": self.D22,
            "rates": self.rates.to_dict(),
            "gmm": self.gmm.to_dict(),
            "objective": self.objective,
            "epsilon_strict": self.epsilon_strict,
            "d_max": self.d_max,
        }

    @classmethod
    def from_dict(cls, content: Dict[str, Any], n_states: int, n_inputs: int) -> "SubsystemModel":
        """按子系统的维数恢复模型"""
        try:
            count = int(content["K"])
            rates = content["rates"]
            model = cls(
                index=int(content["index"]) - 1,
                A=as_matrix(content["A"], "A", (count, n_states, n_states)),
                B=as_matrix(content["B"], "B", (count, n_states, n_inputs)),
                P=as_matrix(content["P"], "P", (n_states, n_states)),
                D11=as_matrix(content["D11"], "D11", (n_inputs, n_inputs)),
                D12=as_matrix(content["D12"], "D12", (n_inputs, n_states)),
                D22=as_matrix(content["D22"], "D22", (n_states, n_states)),
                rates=SubsystemRates(
                    delta_lo=float(rates["delta_lo"]),
                    delta_hi=float(rates["delta_hi"]),
                    xi=float(rates["xi"]),
                ),
                gmm=GmmModel.from_dict(content["gmm"], n_states),
                objective=float("nan") if content.get("objective") is None else float(content["objective"]),
                epsilon_strict=float(content.get("epsilon_strict", 0.0)),
                d_max=float("inf") if content.get("d_max") is None else float(content["d_max"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"子系统字段缺失或无效: {e}")
        if model.gmm.K != count:
            raise ModelFormatError("子系统的K与GMM分量数不一致", index=model.index + 1)
        return model
