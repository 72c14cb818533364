"""
验证服务
对组合模型做独立复算：采样检查Lyapunov条件、逐步检查组合推导链，
并为线性实例提供经典Lyapunov方程解作为对照
"""
import logging
from typing import List, Optional

import numpy as np
from scipy.linalg import LinAlgError, solve

from ..models.composed import ComposedModel
from ..models.report import CertificateReport
from ..schemas.pipeline import VerifyOptions
from ..utils.exceptions import InvalidMatrixError, NotHurwitzError
from .composer import composer
from .sdp_kernel import sdp_kernel
from .subsystem_learner import subsystem_learner

logger = logging.getLogger(__name__)


class Verifier:
    """验证服务类"""

    @staticmethod
    def sample_ball(n: int, samples: int, radius: float, seed: int) -> np.ndarray:
        """在半径为 radius 的 n 维球内均匀采样"""
        rng = np.random.default_rng(seed)
        directions = rng.standard_normal((samples, n))
        norms = np.linalg.norm(directions, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        lengths = radius * rng.random((samples, 1)) ** (1.0 / n)
        return directions / norms * lengths

    @staticmethod
    def default_radius(model: ComposedModel) -> float:
        """2倍最大演示范数，模型中没有记录时取1"""
        norm = model.metadata.get("max_demo_norm")
        if norm is None or not np.isfinite(norm) or norm <= 0:
            return 1.0
        return 2.0 * float(norm)

    @staticmethod
    def verify_composed(model: ComposedModel, samples: int = 10000, radius: Optional[float] = None,
                        tol: float = 1e-7, seed: int = 42,
                        points: Optional[np.ndarray] = None) -> CertificateReport:
        """
        在球内采样检查组合模型

        检查项: 存储函数上下界、V 沿 f 的衰减、f(0) = 0、组合条件矩阵负半定。
        points 给出时直接使用这些点而不再采样
        """
        radius = Verifier.default_radius(model) if radius is None else radius
        if points is None:
            if samples < 1 or radius <= 0:
                raise InvalidMatrixError("采样数必须至少为1，半径必须为正", samples=samples, radius=radius)
            points = Verifier.sample_ball(model.n, samples, radius, seed)
        points = np.atleast_2d(np.asarray(points, dtype=float))

        value, gradient = composer.global_lyapunov(model, points)
        field = composer.global_field(model, points)
        squared = np.sum(points ** 2, axis=1)
        rates = model.rates
        report = CertificateReport(subject="composed")

        lower = rates.delta_lo * squared - value
        worst = int(np.argmax(lower))
        report.add("storage_lower", lower[worst], tol, points[worst])

        upper = value - rates.delta_hi * squared
        worst = int(np.argmax(upper))
        report.add("storage_upper", upper[worst], tol, points[worst])

        decrease = np.sum(gradient * field, axis=1) + rates.xi * value
        worst = int(np.argmax(decrease))
        report.add("decrease", decrease[worst], tol, points[worst])

        at_origin = composer.global_field(model, np.zeros(model.n))
        report.add("equilibrium", float(np.max(np.abs(at_origin))), 0.0)

        matrix = composer.assemble_certificate_matrix(model.subsystems, model.spec.stacked_M, model.mu)
        report.add(
            "composition_certificate",
            sdp_kernel.max_eig(matrix),
            max(tol, float(model.metadata.get("composition_tol", 0.0))),
            composer.witness_direction(model.spec, matrix),
        )
        logger.info(f"组合模型采样验证: 样本数={points.shape[0]}, 通过={report.passed}")
        return report

    @staticmethod
    def lyapunov_oracle_linear(A: np.ndarray) -> np.ndarray:
        """
        解 AᵀP + PA = -I

        用列优先向量化得到 (I⊗Aᵀ + Aᵀ⊗I)·vec(P) = -vec(I)
        """
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise InvalidMatrixError("矩阵必须是非空方阵", shape=list(A.shape))
        if not np.all(np.isfinite(A)):
            raise InvalidMatrixError("矩阵含有非有限值")
        spectral_abscissa = float(np.max(np.linalg.eigvals(A).real))
        if spectral_abscissa >= 0.0:
            raise NotHurwitzError(f"最大特征值实部为 {spectral_abscissa:.3e}", spectral_abscissa=spectral_abscissa)

        n = A.shape[0]
        identity = np.eye(n)
        operator = np.kron(identity, A.T) + np.kron(A.T, identity)
        try:
            vector = solve(operator, -identity.flatten(order="F"))
        except LinAlgError as e:
            raise NotHurwitzError(f"Lyapunov方程奇异: {e}")
        P = vector.reshape((n, n), order="F")
        return 0.5 * (P + P.T)

    @staticmethod
    def cross_check_composition(model: ComposedModel, n_points: int = 10000, tol: float = 1e-7,
                                seed: int = 42, radius: Optional[float] = None) -> CertificateReport:
        """
        逐项复算组合推导链

        (i) Σμ_i ∂V_i/∂x_i·f_i
        (ii) Σ -μ_i ξ_i V_i + Σ μ_i [w_i; x_i]ᵀ D_i [w_i; x_i]
        (iii) Σ -μ_i ξ_i V_i
        要求 (i) ≤ (ii) ≤ (iii)，并核对供给项之和等于组合条件矩阵的二次型
        """
        radius = Verifier.default_radius(model) if radius is None else radius
        points = Verifier.sample_ball(model.n, n_points, radius, seed)
        inputs = points @ model.spec.M.T

        derivative = np.zeros(n_points)
        decay = np.zeros(n_points)
        supply = np.zeros(n_points)
        for subsystem, rows, sub_model, weight in zip(model.spec.subsystems, model.spec.input_slices,
                                                      model.subsystems, model.mu):
            coords = list(subsystem.state_coords)
            x, w = points[:, coords], inputs[:, rows]
            P = 0.5 * (sub_model.P + sub_model.P.T)
            field = subsystem_learner.eval_subsystem_field(sub_model, x, w)
            stacked = np.hstack([w, x])
            derivative += weight * 2.0 * np.sum((x @ P) * field, axis=1)
            decay -= weight * sub_model.rates.xi * np.sum((x @ P) * x, axis=1)
            supply += weight * np.sum((stacked @ sub_model.D) * stacked, axis=1)

        matrix = composer.assemble_certificate_matrix(model.subsystems, model.spec.stacked_M, model.mu)
        ordered = points[:, model.spec.stacked_order]
        quadratic = np.sum((ordered @ matrix) * ordered, axis=1)

        report = CertificateReport(subject="composition_chain")
        gap = derivative - (decay + supply)
        worst = int(np.argmax(gap))
        report.add("dissipation_step", gap[worst], tol, points[worst])
        worst = int(np.argmax(supply))
        report.add("composition_step", supply[worst], tol, points[worst])
        mismatch = np.abs(supply - quadratic) / np.maximum(1.0, np.abs(quadratic))
        worst = int(np.argmax(mismatch))
        report.add("supply_identity", mismatch[worst], 1e-9, points[worst])
        logger.info(f"组合推导链复算: 样本数={n_points}, 通过={report.passed}")
        return report

    @staticmethod
    def verify_model(model: ComposedModel, options: Optional[VerifyOptions] = None) -> List[CertificateReport]:
        """子系统证书、组合模型采样检查和推导链复算"""
        options = options or VerifyOptions()
        reports = [
            subsystem_learner.check_subsystem_certificate(sub_model, tol=options.tol, seed=options.seed)
            for sub_model in model.subsystems
        ]
        reports.append(Verifier.verify_composed(model, options.samples, options.radius, options.tol, options.seed))
        reports.append(Verifier.cross_check_composition(model, options.samples, options.tol, options.seed,
                                                        options.radius))
        return reports


# 全局验证服务实例
verifier = Verifier()
