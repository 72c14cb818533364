"""
演示数据服务
读取轨迹文件、平移平衡点、估计速度并投影到子系统
"""
import json
import logging
import re
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from ..models.demonstration import DemonstrationSet, SubsystemData, Trajectory
from ..models.interconnection import InterconnectionSpec
from ..schemas.pipeline import DataFormat
from ..utils.exceptions import (
    DimensionMismatchError,
    IoError,
    MissingVelocitiesError,
    NotShiftedError,
    ParseError,
    SpecMismatchError,
    TooFewSamplesError,
)

logger = logging.getLogger(__name__)

STATE_COLUMN = re.compile(r"^x(\d+)$")
VELOCITY_COLUMN = re.compile(r"^dx(\d+)$")
TRAJECTORY_COLUMN = "traj_id"


class DemonstrationService:
    """演示数据服务类"""

    @staticmethod
    def load_demonstrations(path: Union[str, Path], fmt: Optional[Union[DataFormat, str]] = None,
                            dt: float = 0.01) -> DemonstrationSet:
        """
        读取演示数据，返回未平移的数据集

        Args:
            path: 数据文件路径
            fmt: csv 或 json，缺省按后缀推断
            dt: CSV文件的采样周期
        """
        source = Path(path)
        if fmt is None:
            fmt = DataFormat.JSON if source.suffix.lower() == ".json" else DataFormat.CSV
        fmt = DataFormat(fmt)
        if not source.is_file():
            raise IoError(f"数据文件不存在: {source}", path=str(source))
        if fmt == DataFormat.CSV:
            demonstrations = DemonstrationService._load_csv(source, dt)
        else:
            demonstrations = DemonstrationService._load_json(source, dt)
        logger.info(
            f"读取演示数据: {source.name}, 轨迹数={len(demonstrations.trajectories)}, "
            f"n={demonstrations.n}, M={demonstrations.sample_count}"
        )
        return demonstrations

    @staticmethod
    def _numbered_columns(columns: List[str], pattern: re.Pattern, label: str) -> List[str]:
        numbered = {}
        for column in columns:
            match = pattern.match(column)
            if match:
                numbered[int(match.group(1))] = column
        if numbered and sorted(numbered) != list(range(1, len(numbered) + 1)):
            raise ParseError(f"表头中的{label}列编号不连续", line=1)
        return [numbered[i] for i in sorted(numbered)]

    @staticmethod
    def _load_csv(source: Path, dt: float) -> DemonstrationSet:
        try:
            frame = pd.read_csv(source, dtype=str, skipinitialspace=True, skip_blank_lines=False, encoding="utf-8")
        except pd.errors.EmptyDataError:
            raise ParseError("CSV文件为空", line=1)
        except pd.errors.ParserError as e:
            match = re.search(r"line (\d+)", str(e))
            raise ParseError(f"CSV解析失败: {e}", line=int(match.group(1)) if match else None)
        except (OSError, UnicodeDecodeError) as e:
            raise IoError(f"读取数据文件失败: {e}", path=str(source))

        # 保留原始行号，空行不参与解析
        frame = frame[~frame.isna().all(axis=1)]
        line_numbers = frame.index.to_numpy() + 2
        frame.columns = [str(column).strip() for column in frame.columns]
        columns = list(frame.columns)
        state_columns = DemonstrationService._numbered_columns(columns, STATE_COLUMN, "状态")
        velocity_columns = DemonstrationService._numbered_columns(columns, VELOCITY_COLUMN, "速度")
        if not state_columns:
            raise ParseError("表头缺少状态列 x1..xn", line=1)
        if TRAJECTORY_COLUMN not in columns:
            raise ParseError("表头缺少 traj_id 列", line=1)
        if velocity_columns and len(velocity_columns) != len(state_columns):
            raise ParseError("速度列数量与状态列数量不一致", line=1)
        unknown = set(columns) - set(state_columns) - set(velocity_columns) - {TRAJECTORY_COLUMN}
        if unknown:
            raise ParseError(f"表头含有未知列: {sorted(unknown)}", line=1)

        numeric_columns = state_columns + velocity_columns
        raw = frame[numeric_columns + [TRAJECTORY_COLUMN]]
        missing = raw.isna().any(axis=1)
        if missing.any():
            line = int(line_numbers[np.flatnonzero(missing.to_numpy())[0]])
            raise ParseError(f"第 {line} 行的字段数量与表头不符", line=line)
        values = frame[numeric_columns].apply(pd.to_numeric, errors="coerce")
        bad = values.isna().any(axis=1) | ~np.isfinite(values.to_numpy(dtype=float)).all(axis=1)
        if bad.any():
            line = int(line_numbers[np.flatnonzero(bad.to_numpy())[0]])
            raise ParseError(f"第 {line} 行含有非数值字段", line=line)

        n = len(state_columns)
        trajectories = []
        for _, group in values.groupby(frame[TRAJECTORY_COLUMN].str.strip(), sort=False):
            states = group[state_columns].to_numpy(dtype=float)
            velocities = group[velocity_columns].to_numpy(dtype=float) if velocity_columns else None
            trajectories.append(Trajectory(states=states, velocities=velocities, dt=dt))
        return DemonstrationSet(trajectories=trajectories, n=n)

    @staticmethod
    def _load_json(source: Path, dt: float) -> DemonstrationSet:
        try:
            document = json.loads(source.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ParseError(f"JSON解析失败: {e.msg}", line=e.lineno)
        except (OSError, UnicodeDecodeError) as e:
            raise IoError(f"读取数据文件失败: {e}", path=str(source))
        if not isinstance(document, dict) or not isinstance(document.get("trajectories"), list):
            raise ParseError("JSON数据必须包含 trajectories 列表")

        default_dt = document.get("dt", dt)
        trajectories = []
        n = None
        for index, item in enumerate(document["trajectories"]):
            if not isinstance(item, dict) or "states" not in item:
                raise ParseError(f"第 {index + 1} 条轨迹缺少 states")
            try:
                states = np.asarray(item["states"], dtype=float)
                velocities = item.get("velocities")
                if velocities is not None:
                    velocities = np.asarray(velocities, dtype=float)
                trajectory_dt = float(item.get("dt", default_dt))
            except (TypeError, ValueError) as e:
                raise ParseError(f"第 {index + 1} 条轨迹含有非数值数据: {e}")
            if states.ndim != 2:
                raise DimensionMismatchError(f"第 {index + 1} 条轨迹的状态不是二维数组", trajectory=index + 1)
            if not np.all(np.isfinite(states)) or (velocities is not None and not np.all(np.isfinite(velocities))):
                raise ParseError(f"第 {index + 1} 条轨迹含有非有限值")
            if n is None:
                n = states.shape[1]
            elif states.shape[1] != n:
                raise DimensionMismatchError(
                    f"第 {index + 1} 条轨迹维数为 {states.shape[1]}，应为 {n}",
                    trajectory=index + 1,
                )
            trajectories.append(Trajectory(states=states, velocities=velocities, dt=trajectory_dt))
        if n is None:
            raise ParseError("JSON数据没有任何轨迹")
        return DemonstrationSet(trajectories=trajectories, n=n)

    @staticmethod
    def shift_to_origin(demonstrations: DemonstrationSet,
                        x_star: Union[str, np.ndarray, List[float]] = "auto") -> DemonstrationSet:
        """把平衡点平移到原点，"auto" 取各轨迹终点的平均值"""
        if isinstance(x_star, str):
            if x_star != "auto":
                raise DimensionMismatchError(f"无法识别的平衡点: {x_star}")
            finals = np.vstack([trajectory.states[-1] for trajectory in demonstrations.trajectories])
            x_star = finals.mean(axis=0)
        x_star = np.asarray(x_star, dtype=float)
        if x_star.shape != (demonstrations.n,):
            raise DimensionMismatchError(
                f"平衡点维数为 {x_star.size}，应为 {demonstrations.n}",
                expected=demonstrations.n,
            )
        trajectories = [
            Trajectory(
                states=trajectory.states - x_star,
                velocities=None if trajectory.velocities is None else trajectory.velocities.copy(),
                dt=trajectory.dt,
            )
            for trajectory in demonstrations.trajectories
        ]
        return DemonstrationSet(
            trajectories=trajectories,
            n=demonstrations.n,
            equilibrium=demonstrations.equilibrium + x_star,
            shifted=True,
            anchored=False,
        )

    @staticmethod
    def estimate_velocities(demonstrations: DemonstrationSet) -> DemonstrationSet:
        """为缺少速度的轨迹做差分估计：内部中心差分，端点单侧差分"""
        trajectories = []
        for index, trajectory in enumerate(demonstrations.trajectories):
            if trajectory.velocities is not None:
                trajectories.append(trajectory)
                continue
            if trajectory.length < 3:
                raise TooFewSamplesError(
                    f"第 {index + 1} 条轨迹只有 {trajectory.length} 个样本，至少需要3个",
                    trajectory=index + 1,
                )
            velocities = np.gradient(trajectory.states, trajectory.dt, axis=0, edge_order=1)
            if demonstrations.shifted and np.all(np.abs(trajectory.states[-1]) <= 1e-12):
                velocities[-1] = 0.0
            trajectories.append(Trajectory(states=trajectory.states, velocities=velocities, dt=trajectory.dt))
        return DemonstrationSet(
            trajectories=trajectories,
            n=demonstrations.n,
            equilibrium=demonstrations.equilibrium,
            shifted=demonstrations.shifted,
            anchored=demonstrations.anchored,
        )

    @staticmethod
    def anchor_equilibrium(demonstrations: DemonstrationSet) -> DemonstrationSet:
        """
        保证数据中恰有一个 (0, 0) 样本，缺失时追加单样本轨迹

        重复的状态样本只给出警告，不修改数据
        """
        if not demonstrations.shifted:
            raise NotShiftedError()
        if not demonstrations.has_velocities:
            raise MissingVelocitiesError()
        states = demonstrations.stacked_states()
        velocities = demonstrations.stacked_velocities()

        at_origin = np.all(states == 0.0, axis=1) & np.all(velocities == 0.0, axis=1)
        nonzero = states[~np.all(states == 0.0, axis=1)]
        if nonzero.shape[0]:
            _, counts = np.unique(nonzero, axis=0, return_counts=True)
            duplicates = int(np.sum(counts[counts > 1] - 1))
            if duplicates:
                logger.warning(f"平移后存在 {duplicates} 个重复的状态样本")

        trajectories = list(demonstrations.trajectories)
        if not at_origin.any():
            dt = trajectories[0].dt if trajectories else 0.01
            trajectories.append(Trajectory(
                states=np.zeros((1, demonstrations.n)),
                velocities=np.zeros((1, demonstrations.n)),
                dt=dt,
            ))
            logger.info("追加平衡点样本 (0, 0)")
        return DemonstrationSet(
            trajectories=trajectories,
            n=demonstrations.n,
            equilibrium=demonstrations.equilibrium,
            shifted=True,
            anchored=True,
        )

    @staticmethod
    def project_to_subsystems(demonstrations: DemonstrationSet,
                              spec: InterconnectionSpec) -> List[SubsystemData]:
        """按子系统的状态坐标和输入坐标切分样本"""
        if not demonstrations.shifted:
            raise NotShiftedError()
        if not demonstrations.has_velocities:
            raise MissingVelocitiesError()
        if spec.n != demonstrations.n:
            raise SpecMismatchError(
                f"拓扑维数 {spec.n} 与数据维数 {demonstrations.n} 不一致",
                spec_n=spec.n,
                data_n=demonstrations.n,
            )
        covered = sorted(c for s in spec.subsystems for c in s.state_coords)
        if covered != list(range(spec.n)):
            raise SpecMismatchError("子系统状态坐标不构成 {1..n} 的划分")

        states = demonstrations.stacked_states()
        velocities = demonstrations.stacked_velocities()
        return [
            SubsystemData(
                index=position,
                x=states[:, list(subsystem.state_coords)],
                xdot=velocities[:, list(subsystem.state_coords)],
                w=states[:, list(subsystem.input_coords)],
            )
            for position, subsystem in enumerate(spec.subsystems)
        ]


# 全局演示数据服务实例
demonstration_service = DemonstrationService()
