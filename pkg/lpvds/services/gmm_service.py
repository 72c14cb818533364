"""
高斯混合模型服务
EM拟合、混合函数 γ_k 求值和基于BIC的分量数选择
"""
import logging
from typing import Iterable, Optional

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from ..models.gmm import GmmModel
from ..schemas.pipeline import GmmOptions
from ..utils.exceptions import DimensionMismatchError, InsufficientDataError

logger = logging.getLogger(__name__)

MIN_WEIGHT = 1e-6
MIN_COV_FLOOR = 1e-12


class GmmService:
    """GMM服务类"""

    @staticmethod
    def _cov_floor(points: np.ndarray, scale: float) -> float:
        d = points.shape[1]
        spread = float(np.trace(np.atleast_2d(np.cov(points, rowvar=False, bias=True)))) if points.shape[0] > 1 else 0.0
        return max(scale * spread / d, MIN_COV_FLOOR)

    @staticmethod
    def _floored(covariance: np.ndarray, floor: float) -> np.ndarray:
        """把特征值截断到下限，这是约束下的极大似然协方差"""
        values, vectors = np.linalg.eigh(0.5 * (covariance + covariance.T))
        result = (vectors * np.maximum(values, floor)) @ vectors.T
        return 0.5 * (result + result.T)

    @staticmethod
    def _m_step(points: np.ndarray, resp: np.ndarray, floor: float):
        counts = resp.sum(axis=0)
        weights = counts / points.shape[0]
        keep = weights >= MIN_WEIGHT
        resp, counts = resp[:, keep], counts[keep]
        weights = counts / counts.sum()
        means = (resp.T @ points) / counts[:, None]
        covariances = np.empty((means.shape[0], points.shape[1], points.shape[1]))
        for k in range(means.shape[0]):
            centered = points - means[k]
            covariances[k] = GmmService._floored((resp[:, k, None] * centered).T @ centered / counts[k], floor)
        return weights, means, covariances, int(np.count_nonzero(~keep))

    @staticmethod
    def fit_gmm(points: np.ndarray, K: int, seed: int = 0,
                opts: Optional[GmmOptions] = None) -> GmmModel:
        """
        EM拟合K分量GMM

        k-means++ 选取初始中心并做硬分配，权重低于1e-6的分量在M步中被移除
        """
        opts = opts or GmmOptions()
        points = np.atleast_2d(np.asarray(points, dtype=float))
        count, d = points.shape
        if K < 1:
            raise InsufficientDataError("分量数必须至少为1", K=K)
        if count < K * (d + 1):
            raise InsufficientDataError(
                f"样本数 {count} 少于 K·(d+1) = {K * (d + 1)}",
                samples=count,
                K=K,
            )
        floor = GmmService._cov_floor(points, opts.cov_floor_scale)

        centers, _ = kmeans_plusplus(points, n_clusters=K, random_state=seed)
        labels = np.argmin(cdist(points, centers, "sqeuclidean"), axis=1)
        resp = np.zeros((count, K))
        resp[np.arange(count), labels] = 1.0

        removed = 0
        trace = []
        model = None
        for iteration in range(1, opts.max_iter + 1):
            weights, means, covariances, dropped = GmmService._m_step(points, resp, floor)
            if dropped:
                removed += dropped
                logger.warning(f"移除 {dropped} 个退化分量，K 降为 {weights.shape[0]}")
            model = GmmModel(weights=weights, means=means, covariances=covariances, cov_floor=floor)
            log_prob = model.log_weighted_densities(points)
            totals = logsumexp(log_prob, axis=1)
            likelihood = float(np.sum(totals))
            resp = np.exp(log_prob - totals[:, None])
            if trace and likelihood < trace[-1] - 1e-9 * max(1.0, abs(trace[-1])) and not dropped:
                logger.warning(f"EM对数似然下降: {trace[-1]:.12e} -> {likelihood:.12e}")
            trace.append(likelihood)
            if len(trace) > 1 and trace[-1] - trace[-2] < opts.tol:
                break

        model.removed_components = removed
        model.log_likelihood = trace[-1]
        model.iterations = len(trace)
        model.trace = trace
        logger.debug(f"GMM拟合完成: K={model.K}, 迭代={model.iterations}, logL={model.log_likelihood:.6e}")
        return model

    @staticmethod
    def gamma(model: GmmModel, x: np.ndarray) -> np.ndarray:
        """
        混合函数 γ_k(x)，在对数空间归一化

        x 为单点时返回长度K的向量，为 (S, d) 时返回 (S, K)
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        points = np.atleast_2d(x)
        if points.shape[1] != model.dim:
            raise DimensionMismatchError(f"点的维数为 {points.shape[1]}，应为 {model.dim}")
        with np.errstate(over="ignore", invalid="ignore"):
            log_prob = model.log_weighted_densities(points)
        peak = np.max(log_prob, axis=1, keepdims=True)
        # 远离所有分量的点对数密度溢出为 -inf，此时退化为均匀分布
        finite = np.isfinite(peak[:, 0])
        scaled = np.ones_like(log_prob)
        scaled[finite] = np.exp(log_prob[finite] - peak[finite])
        scaled = np.where(np.isfinite(scaled), scaled, 0.0)
        scaled = np.maximum(scaled, np.finfo(float).tiny)
        result = scaled / np.sum(scaled, axis=1, keepdims=True)
        if not np.all(finite):
            logger.debug(f"{int(np.sum(~finite))} 个点的对数密度非有限，γ取均匀分布")
        return result[0] if single else result

    @staticmethod
    def fit_best(points: np.ndarray, candidates: Iterable[int], seed: int = 0,
                 opts: Optional[GmmOptions] = None) -> GmmModel:
        """在候选分量数中按BIC选出模型，平局取较小的K，跳过退化或样本不足的K"""
        opts = opts or GmmOptions()
        points = np.atleast_2d(np.asarray(points, dtype=float))
        count, d = points.shape
        best, best_bic, fallback = None, np.inf, None
        for K in sorted(set(candidates)):
            if count < K * (d + 1):
                logger.info(f"跳过 K={K}: 样本数不足")
                continue
            model = GmmService.fit_gmm(points, K, seed, opts)
            if model.removed_components:
                fallback = fallback or model
                logger.info(f"跳过 K={K}: 存在退化分量")
                continue
            bic = model.bic(points)
            logger.debug(f"K={K}: BIC={bic:.6e}")
            if bic < best_bic:
                best, best_bic = model, bic
        if best is None:
            if fallback is None:
                raise InsufficientDataError("没有可用的分量数", samples=count)
            return fallback
        return best

    @staticmethod
    def select_k(points: np.ndarray, k_range: Iterable[int], seed: int = 0,
                 opts: Optional[GmmOptions] = None) -> int:
        """按BIC选择分量数"""
        candidates = list(k_range)
        if not candidates:
            raise InsufficientDataError("k_range 不能为空")
        return GmmService.fit_best(points, candidates, seed, opts).K


# 全局GMM服务实例
gmm_service = GmmService()
