"""
流水线配置数据模式
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..utils.exceptions import ConfigValidationError
from ..utils.serialization import load_json
from .topology import TopologyConfig


class StrictModel(BaseModel):
    """拒绝未知字段的基础模式"""
    model_config = ConfigDict(extra="forbid")


class DataFormat(str, Enum):
    """演示数据文件格式"""
    CSV = "csv"
    JSON = "json"


class TopologyPreset(str, Enum):
    """内置拓扑预设"""
    FULLY_CONNECTED_SCALAR = "fully-connected-scalar"
    MONOLITHIC = "monolithic"


PRESET_NAMES = {preset.value for preset in TopologyPreset}


class SolverOptions(StrictModel):
    """内点法求解器参数"""
    max_iter: int = Field(200, ge=1, description="每次中心化的最大牛顿步数")
    max_outer_iter: int = Field(60, ge=1, description="障碍参数最大更新次数")
    feas_tol: float = Field(1e-8, gt=0, description="可行性容差")
    gap_tol: float = Field(1e-10, gt=0, description="相对对偶间隙容差")
    barrier_growth: float = Field(10.0, gt=1, description="障碍参数增长倍数")
    backtrack: float = Field(0.5, gt=0, lt=1, description="回溯线搜索缩减系数")
    armijo: float = Field(0.01, gt=0, lt=0.5, description="Armijo充分下降系数")


class SubsystemHyperparams(StrictModel):
    """子系统学习超参数"""
    delta_lo: float = Field(0.1, gt=0, description="P的最小特征值下界")
    delta_hi: float = Field(10.0, gt=0, description="P的最大特征值上界")
    xi: float = Field(0.1, gt=0, description="衰减率")
    d_max: float = Field(10.0, gt=0, description="D的特征值上限")
    epsilon_strict: float = Field(1e-6, ge=0, description="严格不等式裕度")
    max_outer_iter: int = Field(20, ge=1, description="P/AB交替最大轮数")
    outer_tol: float = Field(1e-4, gt=0, description="目标相对下降停止阈值")
    supply_gain: float = Field(1.0, gt=0, description="组合供给模板增益")
    supply_template: bool = Field(True, description="是否施加组合感知的供给模板")

    @model_validator(mode="after")
    def validate_ranges(self) -> "SubsystemHyperparams":
        """验证参数之间的关系"""
        if self.delta_lo > self.delta_hi:
            raise ValueError("delta_lo 不能大于 delta_hi")
        if self.supply_template and self.supply_gain > self.d_max:
            raise ValueError("supply_gain 不能超过 d_max")
        return self


class SubsystemOverride(StrictModel):
    """单个子系统的超参数覆盖项"""
    delta_lo: Optional[float] = Field(None, gt=0)
    delta_hi: Optional[float] = Field(None, gt=0)
    xi: Optional[float] = Field(None, gt=0)
    d_max: Optional[float] = Field(None, gt=0)
    epsilon_strict: Optional[float] = Field(None, ge=0)
    max_outer_iter: Optional[int] = Field(None, ge=1)
    outer_tol: Optional[float] = Field(None, gt=0)
    supply_gain: Optional[float] = Field(None, gt=0)
    supply_template: Optional[bool] = None


class GmmOptions(StrictModel):
    """高斯混合模型参数"""
    k: Optional[int] = Field(None, ge=1, description="固定分量数")
    k_range: Optional[List[int]] = Field(None, description="BIC选择的分量数范围 [最小, 最大]")
    max_iter: int = Field(500, ge=1, description="EM最大迭代次数")
    tol: float = Field(1e-8, gt=0, description="对数似然提升阈值")
    cov_floor_scale: float = Field(1e-6, gt=0, description="协方差下限相对尺度")

    @field_validator("k_range")
    @classmethod
    def validate_k_range(cls, v):
        """验证分量数范围"""
        if v is None:
            return v
        if len(v) != 2 or v[0] < 1 or v[0] > v[1]:
            raise ValueError("k_range 必须是 [最小, 最大] 且 1 ≤ 最小 ≤ 最大")
        return v

    @model_validator(mode="after")
    def validate_choice(self) -> "GmmOptions":
        if self.k is not None and self.k_range is not None:
            raise ValueError("k 与 k_range 只能指定一个")
        if self.k is None and self.k_range is None:
            self.k = 1
        return self

    def candidates(self) -> List[int]:
        """候选分量数"""
        if self.k is not None:
            return [self.k]
        return list(range(self.k_range[0], self.k_range[1] + 1))


class CompositionOptions(StrictModel):
    """组合乘子求解参数"""
    mu_min: float = Field(1.0, gt=0, description="乘子下界")
    mu_max: float = Field(1e3, gt=0, description="乘子上界")
    tol: float = Field(1e-8, ge=0, description="组合证书容差")

    @model_validator(mode="after")
    def validate_range(self) -> "CompositionOptions":
        if self.mu_min >= self.mu_max:
            raise ValueError("mu_min 必须小于 mu_max")
        return self


class VerifyOptions(StrictModel):
    """采样验证参数"""
    samples: int = Field(10000, ge=1, description="采样点数")
    seed: int = Field(42, description="随机种子")
    radius: Optional[float] = Field(None, gt=0, description="采样球半径，缺省为2倍最大演示范数")
    tol: float = Field(1e-7, ge=0, description="验证容差")


class DataSource(StrictModel):
    """演示数据来源"""
    path: str = Field(..., min_length=1, description="数据文件路径")
    format: Optional[DataFormat] = Field(None, description="文件格式，缺省按后缀推断")
    dt: float = Field(0.01, gt=0, description="CSV数据的采样周期")

    def resolved_format(self) -> DataFormat:
        """确定文件格式"""
        if self.format is not None:
            return self.format
        suffix = Path(self.path).suffix.lower()
        if suffix == ".json":
            return DataFormat.JSON
        if suffix == ".csv":
            return DataFormat.CSV
        raise ValueError(f"无法从后缀推断数据格式: {self.path}")


class PipelineConfig(StrictModel):
    """完整流水线配置"""
    data: DataSource
    topology: Union[TopologyConfig, str] = Field(
        TopologyPreset.FULLY_CONNECTED_SCALAR.value,
        description="拓扑预设、拓扑文件路径或内联拓扑",
    )
    equilibrium: Union[str, List[float]] = Field("auto", description="平衡点，'auto' 或坐标向量")
    hyperparams: SubsystemHyperparams = Field(default_factory=SubsystemHyperparams)
    subsystem_overrides: Dict[str, SubsystemOverride] = Field(default_factory=dict)
    gmm: GmmOptions = Field(default_factory=GmmOptions)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    composition: CompositionOptions = Field(default_factory=CompositionOptions)
    verify: VerifyOptions = Field(default_factory=VerifyOptions)
    seed: int = Field(0, description="随机种子")
    workers: int = Field(1, ge=1, description="子系统学习并行线程数")
    output_dir: str = Field("output", min_length=1, description="输出目录")

    @field_validator("equilibrium")
    @classmethod
    def validate_equilibrium(cls, v):
        if isinstance(v, str) and v != "auto":
            raise ValueError("equilibrium 只能是 'auto' 或坐标向量")
        return v

    @field_validator("subsystem_overrides")
    @classmethod
    def validate_overrides(cls, v):
        for key in v:
            if not key.isdigit() or int(key) < 1:
                raise ValueError(f"子系统覆盖项的键必须是从1开始的编号: {key}")
        return v

    @model_validator(mode="after")
    def validate_data(self) -> "PipelineConfig":
        self.data.resolved_format()
        for key in self.subsystem_overrides:
            try:
                self.hyperparams_for(int(key) - 1)
            except ValidationError as e:
                raise ValueError(f"子系统 {key} 的覆盖项无效: {e.errors()[0].get('msg')}")
        return self

    def hyperparams_for(self, index: int) -> SubsystemHyperparams:
        """合并全局默认值与第 index 个子系统(从0开始)的覆盖项"""
        override = self.subsystem_overrides.get(str(index + 1))
        if override is None:
            return self.hyperparams
        merged = self.hyperparams.model_dump()
        merged.update(override.model_dump(exclude_none=True))
        return SubsystemHyperparams(**merged)

    def effective(self) -> Dict[str, Any]:
        """内联全部默认值后的配置"""
        return self.model_dump(mode="json")


def _first_error(exc: ValidationError) -> ConfigValidationError:
    error = exc.errors()[0]
    field = ".".join(str(part) for part in error.get("loc", ()))
    return ConfigValidationError(f"配置验证失败: {field}: {error.get('msg')}", field=field or None)


def parse_config(document: Dict[str, Any]) -> PipelineConfig:
    """验证配置文档"""
    try:
        return PipelineConfig.model_validate(document)
    except ValidationError as e:
        raise _first_error(e)


def load_config(path: Union[str, Path]) -> PipelineConfig:
    """读取并验证配置文件，数据路径相对配置文件所在目录解析"""
    document = load_json(path)
    if not isinstance(document, dict):
        raise ConfigValidationError("配置文件顶层必须是对象")
    config = parse_config(document)
    base = Path(path).resolve().parent
    data_path = Path(config.data.path)
    if not data_path.is_absolute():
        config.data.path = str(base / data_path)
    if isinstance(config.topology, str) and config.topology not in PRESET_NAMES:
        topology_path = Path(config.topology)
        if not topology_path.is_absolute():
            config.topology = str(base / topology_path)
    return config
