"""
组合服务
求解乘子 μ，装配全局向量场与全局Lyapunov函数
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import block_diag

from ..models.composed import ComposedModel, GlobalRates
from ..models.interconnection import InterconnectionSpec
from ..models.sdp import QuadraticObjective, SdpProblem
from ..models.subsystem import SubsystemModel
from ..schemas.pipeline import CompositionOptions, SolverOptions
from ..utils.exceptions import (
    CertificateViolationError,
    CompositionInfeasibleError,
    ConfigValidationError,
    DimensionMismatchError,
    IndexOutOfRangeError,
    ModelFormatError,
    NotAPartitionError,
)
from ..utils.serialization import dump_json, load_json
from .interconnection_service import interconnection_service
from .sdp_kernel import sdp_kernel
from .subsystem_learner import subsystem_learner

logger = logging.getLogger(__name__)

MARGIN_FLOOR = -1e3


class Composer:
    """组合服务类"""

    @staticmethod
    def assemble_certificate_matrix(subsystems: Sequence[SubsystemModel], M: np.ndarray,
                                    mu: Sequence[float]) -> np.ndarray:
        """
        组合条件矩阵 [M; I]ᵀ·𝐃(μ₁D₁, …, μ_N D_N)·[M; I]

        M 的列须按子系统状态的拼接顺序排列，结果也按该顺序
        """
        mu = np.asarray(mu, dtype=float)
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if mu.shape != (len(subsystems),):
            raise DimensionMismatchError(f"乘子个数为 {mu.size}，应为 {len(subsystems)}")
        p_total = sum(s.n_inputs for s in subsystems)
        n_total = sum(s.n_states for s in subsystems)
        if p_total == 0:
            M = M.reshape(0, n_total) if M.size == 0 else M
        if M.shape != (p_total, n_total):
            raise DimensionMismatchError(
                f"M 的形状为 {M.shape}，应为 ({p_total}, {n_total})",
                expected=[p_total, n_total],
            )

        d11 = block_diag(*[m * s.D11 for m, s in zip(mu, subsystems)]).reshape(p_total, p_total)
        d12 = block_diag(*[m * s.D12 for m, s in zip(mu, subsystems)]).reshape(p_total, n_total)
        d22 = block_diag(*[m * s.D22 for m, s in zip(mu, subsystems)]).reshape(n_total, n_total)
        result = M.T @ d11 @ M + M.T @ d12 + d12.T @ M + d22
        return 0.5 * (result + result.T)

    @staticmethod
    def witness_direction(spec: Optional[InterconnectionSpec], matrix: np.ndarray) -> List[float]:
        """最大特征向量，有拓扑时换回全局坐标顺序"""
        vector = sdp_kernel.top_eigvec(matrix)
        if spec is None:
            return [float(v) for v in vector]
        result = np.zeros(spec.n)
        result[spec.stacked_order] = vector
        return [float(v) for v in result]

    @staticmethod
    def solve_mu(subsystems: Sequence[SubsystemModel], M: np.ndarray, mu_min: float = 1.0,
                 tol: float = 1e-8, mu_max: float = 1e3,
                 options: Optional[SolverOptions] = None,
                 spec: Optional[InterconnectionSpec] = None) -> Tuple[np.ndarray, float]:
        """
        求使组合条件矩阵负半定且裕度最大的乘子，再整体缩放使 min μ = mu_min

        先要求 ⪯ -tol·I，不满足时放宽到 ⪯ tol·I

        Returns:
            (μ, 组合条件矩阵的最大特征值)
        """
        if mu_min <= 0:
            raise ConfigValidationError("mu_min 必须为正", field="composition.mu_min")
        N = len(subsystems)
        M = np.atleast_2d(np.asarray(M, dtype=float))
        ones = np.ones(N)

        def certificate(mu: np.ndarray) -> np.ndarray:
            return Composer.assemble_certificate_matrix(subsystems, M, mu)

        if M.size == 0 or M.shape[0] == 0:
            mu = mu_min * ones
            eig = sdp_kernel.max_eig(certificate(mu))
            logger.info(f"子系统之间没有耦合, μ 取下界 {mu_min}")
        else:
            dim = N + 1
            upper_mu = mu_max if mu_max > mu_min else 2.0 * mu_min
            block = sdp_kernel.affine_block(
                lambda z: certificate(z[:N]) - z[N] * np.eye(certificate(ones).shape[0]),
                dim,
                "composition",
            )
            start_mu = np.full(N, 0.5 * (mu_min + upper_mu))
            problem = SdpProblem(
                decision_dim=dim,
                objective=QuadraticObjective.linear_only(np.concatenate([np.zeros(N), [1.0]])),
                blocks=[block],
                lower=np.concatenate([np.full(N, mu_min), [MARGIN_FLOOR]]),
                upper=np.concatenate([np.full(N, upper_mu), [np.inf]]),
                initial_z=np.concatenate([start_mu, [sdp_kernel.max_eig(certificate(start_mu)) + 1.0]]),
            )
            solution = sdp_kernel.solve_sdp(problem, options)
            mu = solution.z[:N] if solution.succeeded else mu_min * ones
            mu = np.maximum(mu, mu_min)
            mu = mu * (mu_min / float(np.min(mu)))
            eig = sdp_kernel.max_eig(certificate(mu))
            if not solution.succeeded:
                # 求解失败时只在 μ 全取下界仍满足条件时接受
                logger.warning(f"乘子问题求解状态: {solution.status.value}")
                candidate = sdp_kernel.max_eig(certificate(mu_min * ones))
                if candidate < eig:
                    mu, eig = mu_min * ones, candidate

        if eig <= -tol:
            logger.info(f"组合条件严格成立: max_eig={eig:.3e}, μ={np.round(mu, 6).tolist()}")
        elif eig <= tol:
            logger.info(f"组合条件在容差内成立: max_eig={eig:.3e}")
        else:
            raise CompositionInfeasibleError(
                f"组合条件矩阵的最大特征值为 {eig:.3e}，超过容差 {tol:.1e}",
                witness=Composer.witness_direction(spec, certificate(mu)),
                certificate_eig=eig,
                mu=[float(v) for v in mu],
            )
        return mu, eig

    @staticmethod
    def compose(spec: InterconnectionSpec, subsystems: Sequence[SubsystemModel],
                mu: Optional[Sequence[float]] = None, options: Optional[CompositionOptions] = None,
                solver: Optional[SolverOptions] = None, equilibrium: Optional[np.ndarray] = None,
                require_certificate: bool = True) -> ComposedModel:
        """
        装配组合模型

        未给出 μ 时先调用 solve_mu；组合证书总是重新计算，
        require_certificate 为真且复算超出容差时抛出 CertificateViolationError
        """
        options = options or CompositionOptions()
        subsystems = list(subsystems)
        # 检查子系统与拓扑的维数
        if len(subsystems) != spec.N:
            raise DimensionMismatchError(f"子系统个数为 {len(subsystems)}，拓扑要求 {spec.N}")
        for model, subsystem in zip(subsystems, spec.subsystems):
            if model.n_states != subsystem.n_states or model.n_inputs != subsystem.n_inputs:
                raise DimensionMismatchError(f"子系统 {subsystem.index + 1} 的维数与拓扑不一致")

        # 乘子
        if mu is None:
            mu, _ = Composer.solve_mu(subsystems, spec.stacked_M, options.mu_min, options.tol,
                                      options.mu_max, solver, spec)
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (spec.N,) or np.any(mu <= 0):
            raise DimensionMismatchError("乘子必须是长度为 N 的正向量", mu=mu.tolist())

        # 复算组合证书
        matrix = Composer.assemble_certificate_matrix(subsystems, spec.stacked_M, mu)
        certificate_eig = sdp_kernel.max_eig(matrix)
        certified = certificate_eig <= options.tol
        if not certified:
            if require_certificate:
                raise CertificateViolationError(
                    f"组合证书复算失败: max_eig={certificate_eig:.3e}",
                    certificate_eig=certificate_eig,
                    witness=Composer.witness_direction(spec, matrix),
                )
            logger.warning(f"组合模型没有证书: max_eig={certificate_eig:.3e}")

        # 全局速率: 可复算的界与名义界，名义 ξ 只在 μ ≤ 1 时成立
        N = spec.N
        delta_lo = np.array([s.rates.delta_lo for s in subsystems])
        delta_hi = np.array([s.rates.delta_hi for s in subsystems])
        xi = np.array([s.rates.xi for s in subsystems])
        rates = GlobalRates(
            delta_lo=float(np.min(mu * delta_lo)),
            delta_hi=float(N * np.max(mu * delta_hi)),
            xi=float(np.min(xi)),
        )
        nominal = GlobalRates(
            delta_lo=float(N * np.min(delta_lo)),
            delta_hi=float(N * np.max(delta_hi)),
            xi=float(np.min(mu * xi)),
        )
        logger.info(
            f"组合完成: N={N}, certificate_eig={certificate_eig:.3e}, "
            f"δ̲={rates.delta_lo:.4g}, δ̄={rates.delta_hi:.4g}, ξ={rates.xi:.4g}"
        )
        return ComposedModel(
            spec=spec,
            subsystems=subsystems,
            mu=mu,
            rates=rates,
            nominal_rates=nominal,
            certificate_eig=float(certificate_eig),
            certified=bool(certified),
            equilibrium=equilibrium,
        )

    @staticmethod
    def _as_points(model: ComposedModel, x: np.ndarray) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        points = np.atleast_2d(x)
        if points.shape[1] != model.n:
            raise DimensionMismatchError(f"状态维数为 {points.shape[1]}，应为 {model.n}")
        return points, single

    @staticmethod
    def global_field(model: ComposedModel, x: np.ndarray) -> np.ndarray:
        """f(x)：w = M·x，各子系统求值后写回各自的全局坐标"""
        points, single = Composer._as_points(model, x)
        inputs = points @ model.spec.M.T
        result = np.zeros_like(points)
        for subsystem, rows, sub_model in zip(model.spec.subsystems, model.spec.input_slices, model.subsystems):
            coords = list(subsystem.state_coords)
            result[:, coords] = subsystem_learner.eval_subsystem_field(sub_model, points[:, coords], inputs[:, rows])
        return result[0] if single else result

    @staticmethod
    def global_lyapunov(model: ComposedModel, x: np.ndarray) -> Tuple[Union[float, np.ndarray], np.ndarray]:
        """V(x) = Σ μ_i x_iᵀ P_i x_i 及其梯度"""
        points, single = Composer._as_points(model, x)
        value = np.zeros(points.shape[0])
        gradient = np.zeros_like(points)
        for subsystem, sub_model, weight in zip(model.spec.subsystems, model.subsystems, model.mu):
            coords = list(subsystem.state_coords)
            local = points[:, coords]
            P = 0.5 * (sub_model.P + sub_model.P.T)
            value += weight * np.einsum("si,ij,sj->s", local, P, local)
            gradient[:, coords] = 2.0 * weight * local @ P
        if single:
            return float(value[0]), gradient[0]
        return value, gradient

    @staticmethod
    def global_linear_matrix(model: ComposedModel) -> np.ndarray:
        """K=1 时组合系统是线性的，返回全局矩阵 A"""
        if any(sub_model.K != 1 for sub_model in model.subsystems):
            raise DimensionMismatchError("只有所有子系统 K=1 时组合系统才是线性的")
        result = np.zeros((model.n, model.n))
        for subsystem, rows, sub_model in zip(model.spec.subsystems, model.spec.input_slices, model.subsystems):
            coords = list(subsystem.state_coords)
            result[np.ix_(coords, coords)] += sub_model.A[0]
            result[coords, :] += sub_model.B[0] @ model.spec.M[rows, :]
        return result

    @staticmethod
    def save_model(model: ComposedModel, path: Union[str, Path]) -> Path:
        """写出组合模型文档"""
        return dump_json(path, model.to_dict())

    @staticmethod
    def load_model(path: Union[str, Path]) -> ComposedModel:
        """读取组合模型文档，按其中的拓扑重建互联结构"""
        document = load_json(path)
        if not isinstance(document, dict) or "topology" not in document:
            raise ModelFormatError("模型文档缺少 topology", path=str(path))
        try:
            spec = interconnection_service.from_config(document["topology"])
        except (ConfigValidationError, IndexOutOfRangeError, NotAPartitionError, DimensionMismatchError) as e:
            raise ModelFormatError(f"模型中的拓扑无效: {e.detail}", path=str(path))
        return ComposedModel.from_dict(document, spec)


# 全局组合服务实例
composer = Composer()
