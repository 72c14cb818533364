#!/usr/bin/env python3
"""
组合式LPV-DS学习工具启动脚本
运行方式: python run.py learn --config config.json
"""

import sys
from pathlib import Path


def load_env():
    """初始化项目环境"""
    project_root = Path(__file__).parent.absolute()
    if str(project_root) not in sys.path:
        sys.path.insert(0, str(project_root))
    return project_root


# 必须在导入其他模块之前调用
load_env()


def main():
    """主启动函数"""
    from lpvds.cli import main as cli_main

    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n已中断", file=sys.stderr)
        sys.exit(1)
