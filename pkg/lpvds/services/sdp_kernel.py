"""
半定规划内核
对称矩阵特征值工具和基于对数行列式障碍函数的内点法求解器
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from ..models.sdp import AffineBlock, SdpProblem, SdpSolution, SolverStatus
from ..schemas.pipeline import SolverOptions
from ..utils.exceptions import InvalidMatrixError

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
# 第一阶段辅助变量 s 的下界，保证辅助问题有界
PHASE_ONE_FLOOR = -1.0


@dataclass
class _BarrierRun:
    """一次障碍法运行的结果"""
    y: np.ndarray
    converged: bool
    stopped_early: bool
    certified_above: bool
    newton_steps: int


class _BarrierMethod:
    """
    在 G_j(y) ≺ 0 与变量上下界内最小化凸二次函数的障碍法

    G_j(y) = C_j + Σ y_l F_jl，只保存每个块实际依赖的变量
    """

    def __init__(self, blocks: List[Tuple[np.ndarray, np.ndarray]], hessian: np.ndarray,
                 linear: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                 options: SolverOptions):
        self.blocks = []
        for constant, coefficients in blocks:
            active = np.flatnonzero(np.any(coefficients != 0.0, axis=(1, 2)))
            self.blocks.append((constant, active, coefficients[active]))
        self.hessian = hessian
        self.linear = linear
        self.lower = lower
        self.upper = upper
        self.has_lower = np.isfinite(lower)
        self.has_upper = np.isfinite(upper)
        self.options = options
        self.theta = float(sum(c.shape[0] for c, _, _ in self.blocks)
                           + np.count_nonzero(self.has_lower) + np.count_nonzero(self.has_upper))

    def block_value(self, index: int, y: np.ndarray) -> np.ndarray:
        constant, active, coefficients = self.blocks[index]
        if active.size == 0:
            return constant
        return constant + np.tensordot(y[active], coefficients, axes=1)

    def _slack_factors(self, y: np.ndarray) -> Optional[List[np.ndarray]]:
        """返回每个块 -G_j(y) 的Cholesky因子，不在内部时返回None"""
        if np.any(y[self.has_lower] <= self.lower[self.has_lower]):
            return None
        if np.any(y[self.has_upper] >= self.upper[self.has_upper]):
            return None
        factors = []
        for index in range(len(self.blocks)):
            try:
                factors.append(np.linalg.cholesky(-self.block_value(index, y)))
            except np.linalg.LinAlgError:
                return None
        return factors

    def is_interior(self, y: np.ndarray) -> bool:
        return self._slack_factors(y) is not None

    def objective(self, y: np.ndarray) -> float:
        return float(0.5 * y @ self.hessian @ y + self.linear @ y)

    def merit(self, y: np.ndarray, t: float) -> Optional[float]:
        """t·f(y) + φ(y)，不在内部时为None"""
        factors = self._slack_factors(y)
        if factors is None:
            return None
        value = t * self.objective(y)
        for factor in factors:
            value -= 2.0 * float(np.sum(np.log(np.diag(factor))))
        value -= float(np.sum(np.log(y[self.has_lower] - self.lower[self.has_lower])))
        value -= float(np.sum(np.log(self.upper[self.has_upper] - y[self.has_upper])))
        return value

    def derivatives(self, y: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """合成函数的梯度和Hessian"""
        gradient = t * (self.hessian @ y + self.linear)
        hessian = t * self.hessian.copy()
        for index, (constant, active, coefficients) in enumerate(self.blocks):
            if active.size == 0:
                continue
            factor = np.linalg.cholesky(-self.block_value(index, y))
            inverse = linalg.solve_triangular(factor, np.eye(factor.shape[0]), lower=True)
            scaled = inverse @ coefficients @ inverse.T
            gradient[active] += np.einsum("kii->k", scaled)
            hessian[np.ix_(active, active)] += np.einsum("kij,lij->kl", scaled, scaled)

        gap = y[self.has_lower] - self.lower[self.has_lower]
        gradient[self.has_lower] -= 1.0 / gap
        hessian[self.has_lower, self.has_lower] += 1.0 / gap ** 2
        gap = self.upper[self.has_upper] - y[self.has_upper]
        gradient[self.has_upper] += 1.0 / gap
        hessian[self.has_upper, self.has_upper] += 1.0 / gap ** 2
        return gradient, hessian

    @staticmethod
    def _newton_direction(gradient: np.ndarray, hessian: np.ndarray) -> np.ndarray:
        scale = max(1.0, float(np.max(np.abs(np.diag(hessian))))) if hessian.size else 1.0
        regularized = hessian + 1e-14 * scale * np.eye(hessian.shape[0])
        try:
            factor = linalg.cho_factor(regularized)
            return -linalg.cho_solve(factor, gradient)
        except linalg.LinAlgError:
            return -np.linalg.lstsq(regularized, gradient, rcond=None)[0]

    def center(self, y: np.ndarray, t: float,
               stop: Optional[Callable[[np.ndarray], bool]] = None) -> Tuple[np.ndarray, bool, bool, int]:
        """
        阻尼牛顿法求中心点

        Returns:
            (y, 是否收敛, 是否被stop提前终止, 牛顿步数)
        """
        opts = self.options
        for step in range(opts.max_iter):
            gradient, hessian = self.derivatives(y, t)
            direction = self._newton_direction(gradient, hessian)
            decrement = float(-gradient @ direction)
            if decrement / 2.0 <= NEWTON_TOL:
                return y, True, False, step

            current = self.merit(y, t)
            slack = 64.0 * np.finfo(float).eps * max(1.0, abs(current))
            alpha = 1.0
            accepted = None
            while alpha > 1e-16:
                candidate = y + alpha * direction
                value = self.merit(candidate, t)
                if value is not None and value - current <= opts.armijo * alpha * (-decrement) + slack:
                    accepted = candidate
                    break
                alpha *= opts.backtrack
            if accepted is None:
                logger.debug(f"线搜索停滞: t={t:.3e}, λ²={decrement:.3e}")
                return y, False, False, step + 1
            y = accepted
            if stop is not None and stop(y):
                return y, False, True, step + 1
        return y, False, False, opts.max_iter

    def run(self, y0: np.ndarray, stop: Optional[Callable[[np.ndarray], bool]] = None,
            certify_above: Optional[float] = None) -> _BarrierRun:
        """
        障碍参数外循环

        Args:
            y0: 严格可行的初始点
            stop: 每个牛顿步后调用，返回True时立即结束
            certify_above: 若中心点给出的最优值下界超过该值则结束
        """
        opts = self.options
        y = y0
        t = 1.0
        steps = 0
        for _ in range(opts.max_outer_iter):
            y, centered, stopped, used = self.center(y, t, stop)
            steps += used
            if stopped:
                return _BarrierRun(y, False, True, False, steps)
            value = self.objective(y)
            if centered and certify_above is not None and value - self.theta / t > certify_above:
                return _BarrierRun(y, True, False, True, steps)
            if self.theta / t <= opts.gap_tol * max(1.0, abs(value)):
                return _BarrierRun(y, centered, False, False, steps)
            if not centered:
                return _BarrierRun(y, False, False, False, steps)
            t *= opts.barrier_growth
        return _BarrierRun(y, False, False, False, steps)


class SdpKernel:
    """对称矩阵工具与半定规划求解服务"""

    @staticmethod
    def symmetrize(matrix) -> np.ndarray:
        """构造精确对称的矩阵"""
        array = np.array(matrix, dtype=float)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise InvalidMatrixError("矩阵必须是方阵", shape=list(array.shape))
        if not np.all(np.isfinite(array)):
            raise InvalidMatrixError("矩阵含有非有限值")
        return 0.5 * (array + array.T)

    @staticmethod
    def eigvals(matrix) -> np.ndarray:
        """升序特征值"""
        array = np.asarray(matrix, dtype=float)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise InvalidMatrixError("矩阵必须是方阵", shape=list(array.shape))
        if not np.all(np.isfinite(array)):
            raise InvalidMatrixError("矩阵含有非有限值")
        if array.shape[0] == 0:
            return np.zeros(0)
        return np.linalg.eigvalsh(0.5 * (array + array.T))

    @staticmethod
    def min_eig(matrix) -> float:
        """最小特征值"""
        values = SdpKernel.eigvals(matrix)
        if values.size == 0:
            raise InvalidMatrixError("空矩阵没有特征值")
        return float(values[0])

    @staticmethod
    def max_eig(matrix) -> float:
        """最大特征值，空矩阵返回 -inf"""
        values = SdpKernel.eigvals(matrix)
        if values.size == 0:
            return float("-inf")
        return float(values[-1])

    @staticmethod
    def top_eigvec(matrix) -> np.ndarray:
        """最大特征值对应的单位特征向量，符号规范为最大分量为正"""
        array = SdpKernel.symmetrize(matrix)
        _, vectors = np.linalg.eigh(array)
        vector = vectors[:, -1]
        if vector[np.argmax(np.abs(vector))] < 0:
            vector = -vector
        return vector

    @staticmethod
    def is_nsd(matrix, tol: float = 0.0) -> bool:
        """最大特征值不超过 tol 时为负半定"""
        if tol < 0:
            raise InvalidMatrixError("容差必须非负", tol=tol)
        return SdpKernel.max_eig(matrix) <= tol

    @staticmethod
    def affine_block(fn: Callable[[np.ndarray], np.ndarray], dim: int, name: str = "") -> AffineBlock:
        """
        通过在零点和单位向量处求值得到仿射矩阵映射的系数

        Args:
            fn: 对 z 仿射的对称矩阵函数
            dim: 决策变量维数
            name: 约束块名称
        """
        constant = SdpKernel.symmetrize(fn(np.zeros(dim)))
        coefficients = np.zeros((dim,) + constant.shape)
        for index in range(dim):
            unit = np.zeros(dim)
            unit[index] = 1.0
            coefficients[index] = SdpKernel.symmetrize(fn(unit)) - constant
        return AffineBlock(constant=constant, coefficients=coefficients, name=name)

    @staticmethod
    def _interior_start(problem: SdpProblem) -> np.ndarray:
        """把初始点移入变量上下界的严格内部"""
        z = np.zeros(problem.decision_dim) if problem.initial_z is None else problem.initial_z.copy()
        lower, upper = problem.lower, problem.upper
        for index in range(problem.decision_dim):
            lo, hi = lower[index], upper[index]
            if lo < z[index] < hi:
                continue
            if np.isfinite(lo) and np.isfinite(hi):
                z[index] = 0.5 * (lo + hi)
            elif np.isfinite(lo):
                z[index] = lo + max(1.0, abs(lo))
            else:
                z[index] = hi - max(1.0, abs(hi))
        return z

    @staticmethod
    def _finish(problem: SdpProblem, z: np.ndarray, status: SolverStatus, steps: int,
                options: SolverOptions) -> SdpSolution:
        block_eigs = [SdpKernel.max_eig(block.evaluate(z)) for block in problem.blocks]
        worst = max(block_eigs) if block_eigs else float("-inf")
        if status in (SolverStatus.OPTIMAL, SolverStatus.FEASIBLE):
            within_bounds = bool(np.all(z >= problem.lower) and np.all(z <= problem.upper))
            if worst > -problem.epsilon_strict + options.feas_tol or not within_bounds:
                logger.warning(f"复算约束未通过: max_block_eig={worst:.3e}")
                status = SolverStatus.MAX_ITER
        return SdpSolution(
            z=z,
            objective_value=problem.objective.value(z),
            status=status,
            max_block_eig=worst,
            block_eigs=block_eigs,
            newton_steps=steps,
        )

    @staticmethod
    def solve_sdp(problem: SdpProblem, options: Optional[SolverOptions] = None) -> SdpSolution:
        """
        求解半定规划

        先用辅助变量 s 的第一阶段问题寻找严格可行点，
        再在障碍法下最小化目标。可行集内部为空但边界点满足容差时返回 Feasible。
        """
        options = options or SolverOptions()
        m = problem.decision_dim
        eps = problem.epsilon_strict
        blocks = [
            (block.constant + eps * np.eye(block.size), block.coefficients)
            for block in problem.blocks if block.size > 0
        ]
        z = SdpKernel._interior_start(problem)
        steps = 0

        method = _BarrierMethod(blocks, problem.objective.hessian, problem.objective.linear,
                                problem.lower, problem.upper, options)
        if not method.is_interior(z):
            shift = max(SdpKernel.max_eig(method.block_value(j, z)) for j in range(len(blocks)))
            phase_one = _BarrierMethod(
                [(c, np.concatenate([f, -np.eye(c.shape[0])[None]], axis=0)) for c, f in blocks],
                np.zeros((m + 1, m + 1)),
                np.concatenate([np.zeros(m), [1.0]]),
                np.concatenate([problem.lower, [PHASE_ONE_FLOOR]]),
                np.concatenate([problem.upper, [np.inf]]),
                options,
            )
            start = np.concatenate([z, [max(shift, 0.0) + 1.0]])
            result = phase_one.run(
                start,
                stop=lambda y: method.is_interior(y[:m]),
                certify_above=options.feas_tol,
            )
            steps += result.newton_steps
            z = result.y[:m]
            level = float(result.y[m])
            logger.debug(f"第一阶段结束: s={level:.3e}, 牛顿步数={result.newton_steps}")
            if result.certified_above:
                return SdpKernel._finish(problem, z, SolverStatus.INFEASIBLE, steps, options)
            if not result.stopped_early:
                if level <= options.feas_tol:
                    return SdpKernel._finish(problem, z, SolverStatus.FEASIBLE, steps, options)
                return SdpKernel._finish(problem, z, SolverStatus.MAX_ITER, steps, options)

        result = method.run(z)
        steps += result.newton_steps
        status = SolverStatus.OPTIMAL if result.converged else SolverStatus.FEASIBLE
        logger.debug(f"第二阶段结束: 状态={status.value}, 牛顿步数={result.newton_steps}")
        return SdpKernel._finish(problem, result.y, status, steps, options)


# 全局SDP内核实例
sdp_kernel = SdpKernel()
