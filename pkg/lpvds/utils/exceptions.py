"""
异常处理模块
所有业务异常都带有稳定的错误码和命令行退出码
"""
import json
import logging
import sys
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


class LpvdsError(Exception):
    """基础异常"""
    error_code = "LPVDS_ERROR"
    exit_code = 1

    def __init__(self, detail: str = "内部错误", **context: Any):
        self.detail = detail
        self.context = context
        super().__init__(detail)

    def to_dict(self) -> Dict[str, Any]:
        """转换为诊断字典"""
        content = {
            "error": self.error_code,
            "message": self.detail,
        }
        if self.context:
            content["context"] = self.context
        return content


class InvalidMatrixError(LpvdsError):
    """矩阵含非有限值或形状错误"""
    error_code = "INVALID_MATRIX"

    def __init__(self, detail: str = "矩阵无效", **context: Any):
        super().__init__(detail, **context)


class InvalidProblemError(LpvdsError):
    """SDP问题定义不合法"""
    error_code = "INVALID_PROBLEM"

    def __init__(self, detail: str = "SDP问题定义不合法", **context: Any):
        super().__init__(detail, **context)


class ParseError(LpvdsError):
    """数据文件解析错误"""
    error_code = "PARSE_ERROR"

    def __init__(self, detail: str = "文件解析失败", line: Optional[int] = None, **context: Any):
        self.line = line
        if line is not None:
            context["line"] = line
        super().__init__(detail, **context)


class DimensionMismatchError(LpvdsError):
    """维度不一致"""
    error_code = "DIMENSION_MISMATCH"

    def __init__(self, detail: str = "维度不一致", **context: Any):
        super().__init__(detail, **context)


class TooFewSamplesError(LpvdsError):
    """轨迹样本数不足"""
    error_code = "TOO_FEW_SAMPLES"

    def __init__(self, detail: str = "轨迹样本数不足", **context: Any):
        super().__init__(detail, **context)


class SpecMismatchError(LpvdsError):
    """子系统划分与数据不匹配"""
    error_code = "SPEC_MISMATCH"

    def __init__(self, detail: str = "子系统划分与数据不匹配", **context: Any):
        super().__init__(detail, **context)


class NotShiftedError(LpvdsError):
    """数据尚未平移到原点"""
    error_code = "NOT_SHIFTED"

    def __init__(self, detail: str = "演示数据尚未平移到原点", **context: Any):
        super().__init__(detail, **context)


class MissingVelocitiesError(LpvdsError):
    """缺少速度数据"""
    error_code = "MISSING_VELOCITIES"

    def __init__(self, detail: str = "演示数据缺少速度，请先估计速度", **context: Any):
        super().__init__(detail, **context)


class NotAPartitionError(LpvdsError):
    """状态坐标不构成划分"""
    error_code = "NOT_A_PARTITION"

    def __init__(self, detail: str = "子系统状态坐标不构成划分", **context: Any):
        super().__init__(detail, **context)


class IndexOutOfRangeError(LpvdsError):
    """坐标索引越界"""
    error_code = "INDEX_OUT_OF_RANGE"

    def __init__(self, detail: str = "坐标索引越界", **context: Any):
        super().__init__(detail, **context)


class InsufficientDataError(LpvdsError):
    """样本数量不足以拟合模型"""
    error_code = "INSUFFICIENT_DATA"

    def __init__(self, detail: str = "样本数量不足", **context: Any):
        super().__init__(detail, **context)


class InfeasibleAtStagePError(LpvdsError):
    """P阶段无可行的 (P, D)"""
    error_code = "INFEASIBLE_AT_STAGE_P"

    def __init__(self, detail: str = "P阶段不可行", **context: Any):
        super().__init__(detail, **context)


class CompositionInfeasibleError(LpvdsError):
    """组合证书不可行"""
    error_code = "COMPOSITION_INFEASIBLE"
    exit_code = 2

    def __init__(self, detail: str = "找不到满足组合条件的乘子", witness: Optional[list] = None,
                 **context: Any):
        self.witness = witness
        if witness is not None:
            context["witness"] = witness
        super().__init__(detail, **context)


class CertificateViolationError(LpvdsError):
    """复算证书失败"""
    error_code = "CERTIFICATE_VIOLATION"
    exit_code = 3

    def __init__(self, detail: str = "证书复算未通过", **context: Any):
        super().__init__(detail, **context)


class NotHurwitzError(LpvdsError):
    """矩阵不是Hurwitz矩阵"""
    error_code = "NOT_HURWITZ"

    def __init__(self, detail: str = "矩阵不是Hurwitz矩阵", **context: Any):
        super().__init__(detail, **context)


class NonFiniteStateError(LpvdsError):
    """积分过程中出现非有限状态"""
    error_code = "NON_FINITE_STATE"
    exit_code = 4

    def __init__(self, detail: str = "积分状态非有限", **context: Any):
        super().__init__(detail, **context)


class DivergenceError(LpvdsError):
    """仿真发散"""
    error_code = "DIVERGED"
    exit_code = 4

    def __init__(self, detail: str = "仿真轨迹发散", **context: Any):
        super().__init__(detail, **context)


class ConfigValidationError(LpvdsError):
    """配置验证错误"""
    error_code = "CONFIG_VALIDATION_ERROR"

    def __init__(self, detail: str = "配置验证失败", field: Optional[str] = None, **context: Any):
        if field:
            context["field"] = field
        super().__init__(detail, **context)


class ModelFormatError(LpvdsError):
    """模型文件格式错误"""
    error_code = "MODEL_FORMAT_ERROR"

    def __init__(self, detail: str = "模型文件格式错误", **context: Any):
        super().__init__(detail, **context)


class IoError(LpvdsError):
    """文件读写错误"""
    error_code = "IO_ERROR"

    def __init__(self, detail: str = "文件读写失败", **context: Any):
        super().__init__(detail, **context)


def exit_code_for(exc: BaseException) -> int:
    """根据异常类型确定退出码"""
    if isinstance(exc, LpvdsError):
        return exc.exit_code
    return 1


def handle_cli_error(exc: BaseException) -> int:
    """
    命令行统一异常处理器

    Args:
        exc: 捕获到的异常

    Returns:
        int: 进程退出码
    """
    if isinstance(exc, LpvdsError):
        content = exc.to_dict()
        logger.warning(f"{exc.error_code}: {exc.detail}")
    else:
        logger.error(f"Unexpected Error: {str(exc)}", exc_info=True)
        content = {
            "error": "INTERNAL_ERROR",
            "message": str(exc) or exc.__class__.__name__,
        }

    print(json.dumps(content, ensure_ascii=False, default=str), file=sys.stderr)
    return exit_code_for(exc)
