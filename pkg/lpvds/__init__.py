"""
组合式LPV-DS学习
从演示轨迹按子系统学习带Lyapunov证书的向量场，并组合成全局稳定的动力系统
"""

__version__ = "1.0.0"
