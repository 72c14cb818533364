"""
互联结构服务
构造子系统划分和互联矩阵 M
"""
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ..models.interconnection import InterconnectionSpec, SubsystemSpec
from ..schemas.pipeline import TopologyPreset
from ..schemas.topology import TopologyConfig
from ..utils.exceptions import (
    ConfigValidationError,
    DimensionMismatchError,
    IndexOutOfRangeError,
    NotAPartitionError,
)
from ..utils.serialization import load_json

logger = logging.getLogger(__name__)

# (状态坐标, 输入坐标)，均从0开始
Grouping = Tuple[Sequence[int], Sequence[int]]


class InterconnectionService:
    """互联结构服务类"""

    @staticmethod
    def build_interconnection(n: int, groups: Iterable[Union[Grouping, SubsystemSpec]]) -> InterconnectionSpec:
        """
        校验划分并逐行构造 M

        子系统按最小状态坐标升序重新编号
        """
        if n < 1:
            raise DimensionMismatchError("全局维数必须至少为1", n=n)
        parsed = []
        for position, group in enumerate(groups):
            if isinstance(group, SubsystemSpec):
                states, inputs = group.state_coords, group.input_coords
            else:
                states, inputs = group
            states = tuple(int(c) for c in states)
            inputs = tuple(int(c) for c in inputs)
            for coord in states + inputs:
                if coord < 0 or coord >= n:
                    raise IndexOutOfRangeError(
                        f"子系统 {position + 1} 引用了坐标 {coord + 1}，超出 1..{n}",
                        subsystem=position + 1,
                        coordinate=coord + 1,
                    )
            if not states:
                raise NotAPartitionError(f"子系统 {position + 1} 没有状态坐标", subsystem=position + 1)
            if len(set(states)) != len(states) or len(set(inputs)) != len(inputs):
                raise NotAPartitionError(f"子系统 {position + 1} 含有重复坐标", subsystem=position + 1)
            if set(states) & set(inputs):
                raise NotAPartitionError(f"子系统 {position + 1} 的状态坐标与输入坐标重叠", subsystem=position + 1)
            parsed.append((states, inputs))

        owners = {}
        for position, (states, _) in enumerate(parsed):
            for coord in states:
                if coord in owners:
                    raise NotAPartitionError(
                        f"坐标 {coord + 1} 同时属于子系统 {owners[coord] + 1} 和 {position + 1}",
                        coordinate=coord + 1,
                    )
                owners[coord] = position
        missing = sorted(set(range(n)) - set(owners))
        if missing:
            raise NotAPartitionError(
                f"坐标 {[c + 1 for c in missing]} 不属于任何子系统",
                missing=[c + 1 for c in missing],
            )

        parsed.sort(key=lambda group: min(group[0]))
        subsystems = tuple(
            SubsystemSpec(index=index, state_coords=states, input_coords=inputs)
            for index, (states, inputs) in enumerate(parsed)
        )
        rows = sum(subsystem.n_inputs for subsystem in subsystems)
        M = np.zeros((rows, n))
        row = 0
        for subsystem in subsystems:
            for coord in subsystem.input_coords:
                M[row, coord] = 1.0
                row += 1
        return InterconnectionSpec(n=n, subsystems=subsystems, M=M)

    @staticmethod
    def fully_connected_scalar(n: int) -> InterconnectionSpec:
        """每个坐标是一个标量子系统，其余坐标全部作为它的内部输入"""
        if n < 2:
            raise DimensionMismatchError("全连接标量拓扑要求 n ≥ 2", n=n)
        groups = [((i,), tuple(j for j in range(n) if j != i)) for i in range(n)]
        return InterconnectionService.build_interconnection(n, groups)

    @staticmethod
    def monolithic(n: int) -> InterconnectionSpec:
        """单个子系统覆盖全部坐标，没有内部输入"""
        return InterconnectionService.build_interconnection(n, [(tuple(range(n)), ())])

    @staticmethod
    def from_config(description: Union[TopologyConfig, Dict[str, Any]]) -> InterconnectionSpec:
        """从拓扑描述构造，描述中的坐标从1开始"""
        if not isinstance(description, TopologyConfig):
            try:
                description = TopologyConfig.model_validate(description)
            except ValidationError as e:
                error = e.errors()[0]
                field = ".".join(str(part) for part in error.get("loc", ()))
                raise ConfigValidationError(f"拓扑描述无效: {field}: {error.get('msg')}", field=field or None)
        n = description.n
        groups = []
        for position, subsystem in enumerate(description.subsystems):
            for coord in subsystem.states + subsystem.inputs:
                if coord < 1 or coord > n:
                    raise IndexOutOfRangeError(
                        f"子系统 {position + 1} 引用了坐标 {coord}，超出 1..{n}",
                        subsystem=position + 1,
                        coordinate=coord,
                    )
            groups.append((
                tuple(c - 1 for c in subsystem.states),
                tuple(c - 1 for c in subsystem.inputs),
            ))
        return InterconnectionService.build_interconnection(n, groups)

    @staticmethod
    def resolve(topology: Union[str, TopologyConfig, Dict[str, Any]], n: int) -> InterconnectionSpec:
        """按配置取预设、拓扑文件或内联拓扑"""
        if isinstance(topology, str):
            if topology == TopologyPreset.FULLY_CONNECTED_SCALAR.value:
                spec = InterconnectionService.fully_connected_scalar(n)
            elif topology == TopologyPreset.MONOLITHIC.value:
                spec = InterconnectionService.monolithic(n)
            else:
                spec = InterconnectionService.from_config(load_json(Path(topology)))
        else:
            spec = InterconnectionService.from_config(topology)
        if spec.n != n:
            raise DimensionMismatchError(f"拓扑维数 {spec.n} 与数据维数 {n} 不一致", spec_n=spec.n, data_n=n)
        logger.info(f"互联结构: N={spec.N}, M 行数={spec.M.shape[0]}")
        return spec

    @staticmethod
    def internal_inputs(spec: InterconnectionSpec, x: np.ndarray) -> np.ndarray:
        """w = M·x"""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != spec.n:
            raise DimensionMismatchError(f"状态维数为 {x.shape[-1]}，应为 {spec.n}")
        return x @ spec.M.T


# 全局互联结构服务实例
interconnection_service = InterconnectionService()
