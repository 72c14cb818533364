"""
组合模型
全局Lyapunov函数 V(x) = Σ μ_i x_iᵀ P_i x_i
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..utils.exceptions import ModelFormatError
from ..utils.serialization import as_matrix
from .interconnection import InterconnectionSpec
from .subsystem import SubsystemModel

MODEL_FORMAT = "lpvds-composed/1"


@dataclass(frozen=True)
class GlobalRates:
    """全局界 δ̲‖x‖² ≤ V(x) ≤ δ̄‖x‖² 与衰减率 ξ"""
    delta_lo: float
    delta_hi: float
    xi: float

    def to_dict(self) -> Dict[str, float]:
        return {"delta_lo": self.delta_lo, "delta_hi": self.delta_hi, "xi": self.xi}

    @classmethod
    def from_dict(cls, content: Dict[str, Any]) -> "GlobalRates":
        return cls(
            delta_lo=float(content["delta_lo"]),
            delta_hi=float(content["delta_hi"]),
            xi=float(content["xi"]),
        )


@dataclass
class ComposedModel:
    """子系统模型、乘子和组合证书"""
    spec: InterconnectionSpec
    subsystems: List[SubsystemModel]
    mu: np.ndarray
    rates: GlobalRates
    nominal_rates: GlobalRates
    certificate_eig: float
    certified: bool = True
    equilibrium: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.equilibrium is None:
            self.equilibrium = np.zeros(self.spec.n)
        self.equilibrium = np.asarray(self.equilibrium, dtype=float)

    @property
    def n(self) -> int:
        return self.spec.n

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "topology": self.spec.to_dict(),
            "subsystems": [subsystem.to_dict() for subsystem in self.subsystems],
            "mu": self.mu,
            "rates": self.rates.to_dict(),
            "nominal_rates": self.nominal_rates.to_dict(),
            "certificate_eig": self.certificate_eig,
            "certified": self.certified,
            "equilibrium": self.equilibrium,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, content: Dict[str, Any], spec: InterconnectionSpec) -> "ComposedModel":
        """根据已经重建的互联结构恢复模型"""
        if content.get("format") != MODEL_FORMAT:
            raise ModelFormatError("未知的模型格式", format=content.get("format"))
        try:
            documents = content["subsystems"]
            if len(documents) != spec.N:
                raise ModelFormatError("子系统数量与拓扑不一致", expected=spec.N, actual=len(documents))
            subsystems = [
                SubsystemModel.from_dict(document, s.n_states, s.n_inputs)
                for document, s in zip(documents, spec.subsystems)
            ]
            certificate_eig = content.get("certificate_eig")
            return cls(
                spec=spec,
                subsystems=subsystems,
                mu=as_matrix(content["mu"], "mu", (spec.N,)),
                rates=GlobalRates.from_dict(content["rates"]),
                nominal_rates=GlobalRates.from_dict(content["nominal_rates"]),
                certificate_eig=float("nan") if certificate_eig is None else float(certificate_eig),
                certified=bool(content.get("certified", False)),
                equilibrium=as_matrix(content.get("equilibrium", [0.0] * spec.n), "equilibrium", (spec.n,)),
                metadata=dict(content.get("metadata") or {}),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"模型字段缺失或无效: {e}")
