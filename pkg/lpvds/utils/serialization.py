"""
JSON序列化工具
保证同一模型两次写出的字节完全一致
"""
import json
import math
from pathlib import Path
from typing import Any, Tuple, Union

import numpy as np

from .exceptions import IoError, ModelFormatError


def to_jsonable(value: Any) -> Any:
    """把numpy对象递归转换为可写入JSON的原生类型"""
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        number = float(value)
        if not math.isfinite(number):
            return None
        return number
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    return value


def dumps(document: Any) -> str:
    """确定性的JSON文本"""
    return json.dumps(to_jsonable(document), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def dump_json(path: Union[str, Path], document: Any) -> Path:
    """写出JSON文件"""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(dumps(document), encoding="utf-8")
    except OSError as e:
        raise IoError(f"写入文件失败: {target}: {e}", path=str(target))
    return target


def load_json(path: Union[str, Path]) -> Any:
    """读取JSON文件"""
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"读取文件失败: {source}: {e}", path=str(source))
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"JSON解析失败: {e.msg}", path=str(source), line=e.lineno)


def as_matrix(value: Any, name: str, shape: Tuple[int, ...]) -> np.ndarray:
    """从JSON列表恢复给定形状的数组，空矩阵按形状补齐"""
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelFormatError(f"字段 '{name}' 不是数值矩阵", field=name)
    if array.size == 0 and int(np.prod(shape)) == 0:
        return np.zeros(shape)
    if array.shape != tuple(shape):
        raise ModelFormatError(
            f"字段 '{name}' 形状应为 {tuple(shape)}，实际为 {array.shape}",
            field=name,
        )
    return array
