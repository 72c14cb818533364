"""
仿真服务
四阶Runge-Kutta积分学习到的向量场，计算拟合误差并导出绘图数据
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..models.composed import ComposedModel
from ..models.demonstration import DemonstrationSet
from ..models.rollout import Rollout, Termination
from ..utils.exceptions import (
    ConfigValidationError,
    DimensionMismatchError,
    IoError,
    MissingVelocitiesError,
    NonFiniteStateError,
    NotShiftedError,
)
from ..utils.serialization import dump_json
from .composer import composer
from .subsystem_learner import subsystem_learner

logger = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e6
CONVERGENCE_FRACTION = 1e-3


class Simulator:
    """仿真服务类"""

    @staticmethod
    def rk4_step(model: ComposedModel, x: np.ndarray, dt: float) -> np.ndarray:
        """定步长RK4单步"""
        k1 = composer.global_field(model, x)
        k2 = composer.global_field(model, x + 0.5 * dt * k1)
        k3 = composer.global_field(model, x + 0.5 * dt * k2)
        k4 = composer.global_field(model, x + dt * k3)
        return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    @staticmethod
    def rollout(model: ComposedModel, x0: Sequence[float], t_max: float = 10.0, dt: float = 0.01,
                conv_radius: Optional[float] = None) -> Rollout:
        """
        从 x0 出发积分到收敛、发散或 t_max

        Args:
            model: 组合模型
            x0: 平移后坐标下的初始状态
            t_max: 最长仿真时间
            dt: 积分步长
            conv_radius: 收敛半径，缺省为 1e-3·‖x0‖
        """
        if not dt > 0:
            raise ConfigValidationError("积分步长必须为正", field="dt")
        if not t_max >= dt:
            raise ConfigValidationError("t_max 不能小于 dt", field="t_max")
        x = np.asarray(x0, dtype=float)
        if x.shape != (model.n,):
            raise DimensionMismatchError(f"初始状态维数为 {x.size}，应为 {model.n}")
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError("初始状态含有非有限值", start=x.tolist())
        if conv_radius is None:
            conv_radius = CONVERGENCE_FRACTION * float(np.linalg.norm(x))

        times = [0.0]
        states = [x.copy()]
        values = [composer.global_lyapunov(model, x)[0]]
        terminated = Termination.TIME_LIMIT
        if np.linalg.norm(x) <= conv_radius:
            terminated = Termination.CONVERGED
        else:
            steps = int(np.floor(t_max / dt + 1e-9))
            for j in range(1, steps + 1):
                x = Simulator.rk4_step(model, x, dt)
                if not np.all(np.isfinite(x)):
                    raise NonFiniteStateError(
                        f"t={j * dt:.6g} 时状态非有限",
                        start=[float(v) for v in states[0]],
                        time=j * dt,
                    )
                times.append(j * dt)
                states.append(x.copy())
                values.append(composer.global_lyapunov(model, x)[0])
                norm = float(np.linalg.norm(x))
                if norm > DIVERGENCE_NORM:
                    terminated = Termination.DIVERGED
                    break
                if norm <= conv_radius:
                    terminated = Termination.CONVERGED
                    break

        logger.debug(f"仿真结束: {terminated.value}, 步数={len(times) - 1}")
        return Rollout(
            times=np.asarray(times),
            states=np.vstack(states),
            lyapunov_values=np.asarray(values),
            terminated=terminated,
        )

    @staticmethod
    def _checked_samples(model: ComposedModel, demonstrations: DemonstrationSet):
        if not demonstrations.shifted:
            raise NotShiftedError()
        if not demonstrations.has_velocities:
            raise MissingVelocitiesError()
        if demonstrations.n != model.n:
            raise DimensionMismatchError(
                f"数据维数 {demonstrations.n} 与模型维数 {model.n} 不一致",
                data_n=demonstrations.n,
                model_n=model.n,
            )
        return demonstrations.stacked_states(), demonstrations.stacked_velocities()

    @staticmethod
    def mse(model: ComposedModel, demonstrations: DemonstrationSet) -> float:
        """(1/M)·Σ‖ẋ - f(x)‖²，按样本取平均"""
        states, velocities = Simulator._checked_samples(model, demonstrations)
        if states.shape[0] == 0:
            return 0.0
        residual = velocities - composer.global_field(model, states)
        return float(np.mean(np.sum(residual ** 2, axis=1)))

    @staticmethod
    def subsystem_residual_sums(model: ComposedModel, demonstrations: DemonstrationSet) -> np.ndarray:
        """各子系统的残差平方和 Σ‖ẋ_i - f_i(x_i, w_i)‖²，总和等于全局残差平方和"""
        states, velocities = Simulator._checked_samples(model, demonstrations)
        inputs = states @ model.spec.M.T
        sums = np.zeros(model.spec.N)
        for position, (subsystem, rows, sub_model) in enumerate(
                zip(model.spec.subsystems, model.spec.input_slices, model.subsystems)):
            coords = list(subsystem.state_coords)
            if states.shape[0] == 0:
                continue
            predicted = subsystem_learner.eval_subsystem_field(sub_model, states[:, coords], inputs[:, rows])
            sums[position] = float(np.sum((velocities[:, coords] - predicted) ** 2))
        return sums

    @staticmethod
    def export_plot_data(rollouts: List[Rollout], demonstrations: Optional[DemonstrationSet],
                         path: Union[str, Path], n: Optional[int] = None) -> Path:
        """
        写出绘图用CSV

        列为 kind,index,time,x1..xn,V；kind 为 rollout 或 demo，演示行的 V 留空
        """
        if n is None:
            if demonstrations is not None:
                n = demonstrations.n
            elif rollouts:
                n = int(rollouts[0].states.shape[1])
            else:
                raise DimensionMismatchError("无法确定状态维数")
        state_columns = [f"x{i + 1}" for i in range(n)]
        columns = ["kind", "index", "time"] + state_columns + ["V"]

        frames = []
        for index, rollout in enumerate(rollouts):
            frame = pd.DataFrame(rollout.states, columns=state_columns)
            frame.insert(0, "time", rollout.times)
            frame.insert(0, "index", index + 1)
            frame.insert(0, "kind", "rollout")
            frame["V"] = rollout.lyapunov_values
            frames.append(frame)
        if demonstrations is not None:
            for index, trajectory in enumerate(demonstrations.trajectories):
                frame = pd.DataFrame(trajectory.states, columns=state_columns)
                frame.insert(0, "time", np.arange(trajectory.length) * trajectory.dt)
                frame.insert(0, "index", index + 1)
                frame.insert(0, "kind", "demo")
                frame["V"] = np.nan
                frames.append(frame)
        table = pd.concat(frames, ignore_index=True)[columns] if frames else pd.DataFrame(columns=columns)

        target = Path(path)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            table.to_csv(target, index=False, float_format="%.17g")
        except OSError as e:
            raise IoError(f"写入绘图数据失败: {target}: {e}", path=str(target))
        logger.info(f"绘图数据已写出: {target}, 行数={len(table)}")
        return target

    @staticmethod
    def export_rollouts_json(rollouts: List[Rollout], path: Union[str, Path]) -> Path:
        """轨迹的JSON形式"""
        return dump_json(path, {"rollouts": [rollout.to_dict() for rollout in rollouts]})


# 全局仿真服务实例
simulator = Simulator()
