"""
子系统学习服务
在存储函数界与耗散矩阵不等式约束下最小化跟踪误差，P阶段与AB阶段交替求解
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..models.demonstration import SubsystemData
from ..models.gmm import GmmModel
from ..models.report import CertificateReport
from ..models.sdp import QuadraticObjective, SdpProblem
from ..models.subsystem import SubsystemModel, SubsystemRates, small_gain_matrix
from ..schemas.pipeline import SolverOptions, SubsystemHyperparams
from ..utils.exceptions import DimensionMismatchError, InfeasibleAtStagePError, InsufficientDataError
from .gmm_service import gmm_service
from .sdp_kernel import sdp_kernel

logger = logging.getLogger(__name__)

RIDGE = 1e-8
RANK_DEFICIENT_COND = 1e12
PULLBACK_ATTEMPTS = 5
# P阶段裕度变量的下界
MARGIN_FLOOR = -1e3


@dataclass
class _Certificate:
    """P阶段得到的存储函数与供给率"""
    P: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D22: np.ndarray
    margin: float


def _sym_count(size: int) -> int:
    return size * (size + 1) // 2


def _sym_from_vector(values: np.ndarray, size: int) -> np.ndarray:
    matrix = np.zeros((size, size))
    rows, cols = np.triu_indices(size)
    matrix[rows, cols] = values
    matrix[cols, rows] = values
    return matrix


def _sym_to_vector(matrix: np.ndarray) -> np.ndarray:
    rows, cols = np.triu_indices(matrix.shape[0])
    return matrix[rows, cols]


class SubsystemLearner:
    """子系统学习服务类"""

    @staticmethod
    def _as_batch(model: SubsystemModel, x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        w = np.zeros((x.shape[0], 0)) if w.size == 0 else np.atleast_2d(w)
        if x.shape[1] != model.n_states or w.shape[1] != model.n_inputs or w.shape[0] != x.shape[0]:
            raise DimensionMismatchError(
                f"子系统 {model.index + 1} 期望 x∈R^{model.n_states}, w∈R^{model.n_inputs}",
                x_shape=list(x.shape),
                w_shape=list(w.shape),
            )
        return x, w, single

    @staticmethod
    def eval_subsystem_field(model: SubsystemModel, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """f_i(x, w) = Σ_k γ_k(x)(A_k x + B_k w)，支持单点或按行批量"""
        x, w, single = SubsystemLearner._as_batch(model, x, w)
        weights = gmm_service.gamma(model.gmm, x)
        result = np.zeros_like(x)
        for k in range(model.K):
            result += weights[:, k, None] * (x @ model.A[k].T + w @ model.B[k].T)
        return result[0] if single else result

    @staticmethod
    def _features(gmm: GmmModel, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """回归特征 [γ_k x, γ_k w]_k"""
        weights = gmm_service.gamma(gmm, x)
        blocks = []
        for k in range(gmm.K):
            blocks.append(weights[:, k, None] * x)
            blocks.append(weights[:, k, None] * w)
        return np.hstack(blocks)

    @staticmethod
    def _unpack(theta: np.ndarray, K: int, n: int, p: int) -> Tuple[np.ndarray, np.ndarray]:
        """系数矩阵 Θ (K(n+p), n) 拆成 A (K,n,n) 和 B (K,n,p)"""
        A = np.empty((K, n, n))
        B = np.empty((K, n, p))
        for k in range(K):
            offset = k * (n + p)
            A[k] = theta[offset:offset + n].T
            B[k] = theta[offset + n:offset + n + p].T
        return A, B

    @staticmethod
    def _pack(A: np.ndarray, B: np.ndarray) -> np.ndarray:
        rows = []
        for k in range(A.shape[0]):
            rows.append(A[k].T)
            rows.append(B[k].T)
        return np.vstack(rows)

    @staticmethod
    def initial_fit(data: SubsystemData, gmm: GmmModel) -> Tuple[np.ndarray, np.ndarray]:
        """无约束加权最小二乘，带 1e-8 岭项"""
        K, n, p = gmm.K, data.n_states, data.n_inputs
        if gmm.dim != n:
            raise DimensionMismatchError(f"GMM维数 {gmm.dim} 与子系统状态维数 {n} 不一致")
        required = K * (n + p) + 1
        if data.sample_count < required:
            raise InsufficientDataError(
                f"子系统 {data.index + 1} 样本数 {data.sample_count} 少于 {required}",
                index=data.index + 1,
            )
        # 特征为 γ_k(x)·[x; w]，带岭项的最小二乘
        features = SubsystemLearner._features(gmm, data.x, data.w)
        normal = features.T @ features + RIDGE * np.eye(features.shape[1])
        condition = np.linalg.cond(normal)
        if condition > RANK_DEFICIENT_COND:
            logger.warning(f"子系统 {data.index + 1} 的正规方程秩亏: cond={condition:.3e}")
        theta = np.linalg.solve(normal, features.T @ data.xdot)
        return SubsystemLearner._unpack(theta, K, n, p)

    @staticmethod
    def tracking_mse(data: SubsystemData, gmm: GmmModel, A: np.ndarray, B: np.ndarray) -> float:
        """每个样本的平均平方速度残差"""
        features = SubsystemLearner._features(gmm, data.x, data.w)
        residual = data.xdot - features @ SubsystemLearner._pack(A, B)
        return float(np.sum(residual ** 2) / max(data.sample_count, 1))

    @staticmethod
    def _supply_template(n: int, p: int, hp: SubsystemHyperparams, fanout: np.ndarray) -> np.ndarray:
        """diag(β I_p, -β diag(fanout))"""
        beta = hp.supply_gain
        return np.diag(np.concatenate([np.full(p, beta), -beta * fanout]))

    @staticmethod
    def _stage_p(A: np.ndarray, B: np.ndarray, hp: SubsystemHyperparams, fanout: np.ndarray,
                 options: SolverOptions) -> Tuple[Optional[_Certificate], List[float]]:
        """
        固定 (A, B) 求最大裕度的 (P, D)

        Returns:
            (证书或None, 每个分量耗散块的最大特征值)
        """
        # 决策变量: P, D11, D12, D22 的上三角与裕度变量 level
        K, n, p = A.shape[0], A.shape[1], B.shape[2]
        sizes = [_sym_count(n), _sym_count(p), p * n, _sym_count(n), 1]
        offsets = np.cumsum([0] + sizes)
        dim = int(offsets[-1])

        def unpack(z: np.ndarray):
            P = _sym_from_vector(z[offsets[0]:offsets[1]], n)
            D11 = _sym_from_vector(z[offsets[1]:offsets[2]], p)
            D12 = z[offsets[2]:offsets[3]].reshape(p, n)
            D22 = _sym_from_vector(z[offsets[3]:offsets[4]], n)
            return P, D11, D12, D22, z[offsets[4]]

        def assembled(z: np.ndarray) -> np.ndarray:
            _, D11, D12, D22, _ = unpack(z)
            return np.block([[D11, D12], [D12.T, D22]])

        def shifted_gain(z: np.ndarray, k: int) -> np.ndarray:
            P, D11, D12, D22, level = unpack(z)
            return small_gain_matrix(P, A[k], B[k], D11, D12, D22, hp.xi) - level * np.eye(n + p)

        # 约束块
        identity_n = np.eye(n)
        blocks = [
            sdp_kernel.affine_block(lambda z, k=k: shifted_gain(z, k), dim, name=f"small_gain[{k}]")
            for k in range(K)
        ]
        blocks.append(sdp_kernel.affine_block(lambda z: hp.delta_lo * identity_n - unpack(z)[0], dim, "storage_lower"))
        blocks.append(sdp_kernel.affine_block(lambda z: unpack(z)[0] - hp.delta_hi * identity_n, dim, "storage_upper"))
        blocks.append(sdp_kernel.affine_block(lambda z: assembled(z) - hp.d_max * np.eye(n + p), dim, "supply_cap"))
        if hp.supply_template:
            template = SubsystemLearner._supply_template(n, p, hp, fanout)
            blocks.append(sdp_kernel.affine_block(lambda z: assembled(z) - template, dim, "supply_template"))

        # 初始点取存储界中点，level 足够大使其严格可行
        cap = min(hp.supply_gain, hp.d_max) if hp.supply_template else hp.d_max
        start_p = 0.5 * (hp.delta_lo + hp.delta_hi) * identity_n
        start_d11 = 0.5 * cap * np.eye(p)
        start_d22 = -np.diag(hp.supply_gain * fanout + 1.0) if hp.supply_template else -identity_n
        start_gain = max(
            sdp_kernel.max_eig(small_gain_matrix(start_p, A[k], B[k], start_d11, np.zeros((p, n)), start_d22, hp.xi))
            for k in range(K)
        )
        initial = np.concatenate([
            _sym_to_vector(start_p),
            _sym_to_vector(start_d11),
            np.zeros(p * n),
            _sym_to_vector(start_d22),
            [max(start_gain + 1.0, MARGIN_FLOOR + 1.0)],
        ])
        # 最小化 level，下界防止问题无界
        lower = np.full(dim, -np.inf)
        lower[-1] = MARGIN_FLOOR
        objective = np.zeros(dim)
        objective[-1] = 1.0
        problem = SdpProblem(
            decision_dim=dim,
            objective=QuadraticObjective.linear_only(objective),
            blocks=blocks,
            lower=lower,
            epsilon_strict=0.0,
            initial_z=initial,
        )
        solution = sdp_kernel.solve_sdp(problem, options)
        P, D11, D12, D22, _ = unpack(solution.z)
        # 按未平移的块复算裕度
        gains = [
            sdp_kernel.max_eig(small_gain_matrix(P, A[k], B[k], D11, D12, D22, hp.xi))
            for k in range(K)
        ]
        margin = max(gains)
        logger.debug(f"P阶段: 状态={solution.status.value}, 裕度={margin:.3e}")
        if not solution.succeeded or margin > -hp.epsilon_strict + options.feas_tol:
            return None, gains
        return _Certificate(P=P, D11=D11, D12=D12, D22=D22, margin=margin), gains

    @staticmethod
    def _pullback_rate(hp: SubsystemHyperparams, fanout: np.ndarray) -> float:
        """−ρI 在 P = δ̲I、D 取模板时满足耗散不等式"""
        spread = float(np.max(fanout)) if fanout.size else 0.0
        return hp.xi / 2.0 + hp.supply_gain * spread / (2.0 * hp.delta_lo) + 1.0

    @staticmethod
    def _stage_p_with_pullback(A: np.ndarray, B: np.ndarray, hp: SubsystemHyperparams, fanout: np.ndarray,
                               options: SolverOptions, index: int):
        """P阶段不可行时把 (A, B) 逐步混向 (−ρI, 0)"""
        certificate, gains = SubsystemLearner._stage_p(A, B, hp, fanout, options)
        if certificate is not None:
            return A, B, certificate, 0
        rho = SubsystemLearner._pullback_rate(hp, fanout)
        target = -rho * np.eye(A.shape[1])
        for attempt in range(1, PULLBACK_ATTEMPTS + 1):
            mix = attempt / PULLBACK_ATTEMPTS
            pulled_a = (1.0 - mix) * A + mix * target
            pulled_b = (1.0 - mix) * B
            certificate, gains = SubsystemLearner._stage_p(pulled_a, pulled_b, hp, fanout, options)
            if certificate is not None:
                logger.info(f"子系统 {index + 1}: 第 {attempt} 次回拉后P阶段可行 (ρ={rho:.3g})")
                return pulled_a, pulled_b, certificate, attempt
        failing = [k for k, gain in enumerate(gains) if gain > -hp.epsilon_strict + options.feas_tol]
        raise InfeasibleAtStagePError(
            f"子系统 {index + 1} 在 {PULLBACK_ATTEMPTS} 次回拉后仍找不到 (P, D)",
            index=index + 1,
            failing_components=failing,
            block_eigs=gains,
        )

    @staticmethod
    def _stage_ab(data: SubsystemData, gmm: GmmModel, certificate: _Certificate, A: np.ndarray, B: np.ndarray,
                  hp: SubsystemHyperparams, options: SolverOptions) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """固定 (P, D) 在耗散约束下最小化跟踪误差"""
        K, n, p = A.shape[0], A.shape[1], B.shape[2]
        # 目标是样本平均的跟踪误差，按列展开成 (A, B) 的二次型
        features = SubsystemLearner._features(gmm, data.x, data.w)
        count = max(data.sample_count, 1)
        gram = (features.T @ features + RIDGE * np.eye(features.shape[1])) / count
        cross = features.T @ data.xdot / count
        dim = features.shape[1] * n
        objective = QuadraticObjective(
            hessian=2.0 * np.kron(np.eye(n), gram),
            linear=-2.0 * cross.flatten(order="F"),
            constant=float(np.sum(data.xdot ** 2) / count),
        )

        def unpack(z: np.ndarray):
            return SubsystemLearner._unpack(z.reshape(features.shape[1], n, order="F"), K, n, p)

        # 每个分量的小增益块，(P, D) 固定后对 (A, B) 仿射
        c = certificate
        blocks = [
            sdp_kernel.affine_block(
                lambda z, k=k: small_gain_matrix(c.P, unpack(z)[0][k], unpack(z)[1][k], c.D11, c.D12, c.D22, hp.xi),
                dim,
                name=f"small_gain[{k}]",
            )
            for k in range(K)
        ]
        problem = SdpProblem(
            decision_dim=dim,
            objective=objective,
            blocks=blocks,
            epsilon_strict=hp.epsilon_strict,
            # 以上一轮的 (A, B) 为起点，不可行时由第一阶段修正
            initial_z=SubsystemLearner._pack(A, B).flatten(order="F"),
        )
        solution = sdp_kernel.solve_sdp(problem, options)
        logger.debug(f"AB阶段: 状态={solution.status.value}, 目标={solution.objective_value:.6e}")
        if not solution.succeeded:
            return None
        return unpack(solution.z)

    @staticmethod
    def learn_subsystem(data: SubsystemData, gmm: GmmModel, hp: Optional[SubsystemHyperparams] = None,
                        options: Optional[SolverOptions] = None,
                        fanout: Optional[np.ndarray] = None) -> SubsystemModel:
        """
        交替求解约束回归

        Args:
            data: 子系统数据
            gmm: 子系统状态上的GMM
            hp: 超参数
            options: 求解器参数
            fanout: 子系统各状态坐标被其他子系统读取的次数，用于供给模板
        """
        hp = hp or SubsystemHyperparams()
        options = options or SolverOptions()
        fanout = np.zeros(data.n_states) if fanout is None else np.asarray(fanout, dtype=float)
        if fanout.shape != (data.n_states,):
            raise DimensionMismatchError("fanout 维数与子系统状态维数不一致")

        A, B = SubsystemLearner.initial_fit(data, gmm)
        best = None
        history = []
        pullbacks = 0
        previous = None
        for outer in range(hp.max_outer_iter):
            A, B, certificate, pulled = SubsystemLearner._stage_p_with_pullback(
                A, B, hp, fanout, options, data.index
            )
            pullbacks += pulled
            objective = SubsystemLearner.tracking_mse(data, gmm, A, B)
            if best is None or objective < best[0]:
                best = (objective, A, B, certificate)

            updated = SubsystemLearner._stage_ab(data, gmm, certificate, A, B, hp, options)
            if updated is None:
                logger.info(f"子系统 {data.index + 1}: AB阶段未找到可行解，停止交替")
                break
            A, B = updated
            objective = SubsystemLearner.tracking_mse(data, gmm, A, B)
            history.append(objective)
            if objective < best[0]:
                best = (objective, A, B, certificate)
            if previous is not None and (previous - objective) <= hp.outer_tol * max(previous, np.finfo(float).tiny):
                break
            previous = objective

        objective, A, B, certificate = best
        logger.info(
            f"子系统 {data.index + 1} 学习完成: MSE={objective:.6e}, 交替轮数={len(history)}, 回拉次数={pullbacks}"
        )
        return SubsystemModel(
            index=data.index,
            A=A,
            B=B,
            P=certificate.P,
            D11=certificate.D11,
            D12=certificate.D12,
            D22=certificate.D22,
            rates=SubsystemRates(delta_lo=hp.delta_lo, delta_hi=hp.delta_hi, xi=hp.xi),
            gmm=gmm,
            objective=objective,
            epsilon_strict=hp.epsilon_strict,
            objective_history=history,
            pullbacks=pullbacks,
            stage_p_margin=certificate.margin,
            d_max=hp.d_max,
        )

    @staticmethod
    def dissipation_residual(model: SubsystemModel, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """∂V/∂x·f(x, w) + ξV(x) − [w; x]ᵀ D [w; x]，非正时耗散不等式成立"""
        x, w, single = SubsystemLearner._as_batch(model, x, w)
        field = SubsystemLearner.eval_subsystem_field(model, x, w)
        P = 0.5 * (model.P + model.P.T)
        derivative = 2.0 * np.sum((x @ P) * field, axis=1)
        storage = np.sum((x @ P) * x, axis=1)
        stacked = np.hstack([w, x])
        supply = np.sum((stacked @ model.D) * stacked, axis=1)
        residual = derivative + model.rates.xi * storage - supply
        return residual[0] if single else residual

    @staticmethod
    def check_subsystem_certificate(model: SubsystemModel, tol: float = 1e-7, samples: int = 1000,
                                    seed: int = 42) -> CertificateReport:
        """复算子系统证书的各项条件"""
        report = CertificateReport(subject=f"subsystem[{model.index + 1}]")
        for k in range(model.K):
            block = model.small_gain_block(k)
            report.add(
                f"small_gain[{k + 1}]",
                sdp_kernel.max_eig(block) + model.epsilon_strict,
                tol,
                sdp_kernel.top_eigvec(block),
            )
        storage = sdp_kernel.eigvals(model.P)
        report.add("storage_lower", model.rates.delta_lo - storage[0], tol)
        report.add("storage_upper", storage[-1] - model.rates.delta_hi, tol)
        if np.isfinite(model.d_max):
            report.add("supply_cap", sdp_kernel.max_eig(model.D) - model.d_max, tol)

        rng = np.random.default_rng(seed)
        x = rng.standard_normal((samples, model.n_states))
        w = rng.standard_normal((samples, model.n_inputs))
        residual = SubsystemLearner.dissipation_residual(model, x, w)
        worst = int(np.argmax(residual))
        report.add("dissipation_sampled", residual[worst], tol, np.concatenate([w[worst], x[worst]]))
        return report


# 全局子系统学习服务实例
subsystem_learner = SubsystemLearner()
