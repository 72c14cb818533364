# 工具包初始化
from . import exceptions, serialization

__all__ = ["exceptions", "serialization"]
