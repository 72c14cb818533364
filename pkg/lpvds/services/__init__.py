# 服务包初始化
from . import (
    composer,
    demonstration_service,
    gmm_service,
    interconnection_service,
    pipeline_service,
    sdp_kernel,
    simulator,
    subsystem_learner,
    verifier,
)

__all__ = [
    "composer",
    "demonstration_service",
    "gmm_service",
    "interconnection_service",
    "pipeline_service",
    "sdp_kernel",
    "simulator",
    "subsystem_learner",
    "verifier",
]
