"""
拓扑配置数据模式
坐标从1开始编号
"""
from typing import List

from pydantic import BaseModel, ConfigDict, Field


class SubsystemTopology(BaseModel):
    """单个子系统的坐标分组与输入边"""
    model_config = ConfigDict(extra="forbid")

    states: List[int] = Field(..., min_length=1, description="子系统状态坐标")
    inputs: List[int] = Field(default_factory=list, description="作为内部输入的坐标")


class TopologyConfig(BaseModel):
    """互联拓扑描述"""
    model_config = ConfigDict(extra="forbid")

    n: int = Field(..., ge=1, description="全局状态维数")
    subsystems: List[SubsystemTopology] = Field(..., min_length=1, description="子系统列表")
