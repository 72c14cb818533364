"""
数据模式模块
"""
from .pipeline import (
    CompositionOptions,
    DataFormat,
    DataSource,
    GmmOptions,
    PipelineConfig,
    SolverOptions,
    SubsystemHyperparams,
    TopologyPreset,
    VerifyOptions,
    load_config,
    parse_config,
)
from .topology import SubsystemTopology, TopologyConfig
