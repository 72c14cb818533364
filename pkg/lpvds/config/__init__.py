"""
配置模块
包含进程级设置
"""

from .settings import Settings, settings

__all__ = ['Settings', 'settings']
