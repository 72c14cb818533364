"""
高斯混合模型
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from ..utils.exceptions import ModelFormatError
from ..utils.serialization import as_matrix


@dataclass
class GmmModel:
    """K分量高斯混合模型，定义混合函数 γ_k"""
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    removed_components: int = 0
    log_likelihood: float = float("nan")
    iterations: int = 0
    cov_floor: float = 0.0
    trace: list = field(default_factory=list, repr=False)

    @property
    def K(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @cached_property
    def _factors(self) -> Tuple[np.ndarray, np.ndarray]:
        """协方差的Cholesky因子与各分量的对数归一化常数"""
        factors = np.linalg.cholesky(self.covariances)
        log_det = 2.0 * np.sum(np.log(np.diagonal(factors, axis1=1, axis2=2)), axis=1)
        log_norm = np.log(self.weights) - 0.5 * (self.dim * np.log(2.0 * np.pi) + log_det)
        return factors, log_norm

    def log_weighted_densities(self, points: np.ndarray) -> np.ndarray:
        """log(π_k p(x|k))，形状 (S, K)"""
        factors, log_norm = self._factors
        points = np.atleast_2d(points)
        result = np.empty((points.shape[0], self.K))
        for k in range(self.K):
            centered = (points - self.means[k]).T
            whitened = solve_triangular(factors[k], centered, lower=True)
            result[:, k] = log_norm[k] - 0.5 * np.sum(whitened ** 2, axis=0)
        return result

    def bic(self, points: np.ndarray) -> float:
        """贝叶斯信息准则"""
        d = self.dim
        params = (self.K - 1) + self.K * d + self.K * d * (d + 1) // 2
        total = float(np.sum(logsumexp(self.log_weighted_densities(points), axis=1)))
        return -2.0 * total + params * np.log(points.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "K": self.K,
            "weights": self.weights,
            "means": self.means,
            "covariances": self.covariances,
        }

    @classmethod
    def from_dict(cls, content: Dict[str, Any], dim: int) -> "GmmModel":
        try:
            count = int(content["K"])
            weights = as_matrix(content["weights"], "gmm.weights", (count,))
            means = as_matrix(content["means"], "gmm.means", (count, dim))
            covariances = as_matrix(content["covariances"], "gmm.covariances", (count, dim, dim))
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"GMM字段缺失或无效: {e}")
        if count < 1 or np.any(weights <= 0):
            raise ModelFormatError("GMM权重必须为正", K=count)
        try:
            np.linalg.cholesky(covariances)
        except np.linalg.LinAlgError:
            raise ModelFormatError("GMM协方差必须正定", K=count)
        return cls(weights=weights, means=means, covariances=covariances)
