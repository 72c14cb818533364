#!/usr/bin/env python3
"""
命令行工具
learn / verify / simulate / export-plot / compare

退出码: 0 成功, 1 一般错误, 2 组合不可行, 3 证书未通过, 4 仿真发散
"""
import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from .config import settings
from .schemas.pipeline import VerifyOptions, load_config
from .services.pipeline_service import pipeline_service
from .utils.exceptions import ConfigValidationError, handle_cli_error
from .utils.serialization import dumps

logger = logging.getLogger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    """参数错误按配置错误处理，退出码为1"""

    def error(self, message: str):
        raise ConfigValidationError(f"命令行参数错误: {message}")


def configure_logging() -> None:
    """按进程设置配置根日志"""
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format=settings.LOG_FORMAT,
        stream=sys.stderr,
    )


def parse_start(value: str):
    """demo-starts 或逗号分隔的坐标"""
    if value == "demo-starts":
        return value
    try:
        return [float(part) for part in value.split(",")]
    except ValueError:
        raise ConfigValidationError(f"无法解析初始状态: {value}", field="from")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="lpvds", description="组合式LPV-DS学习工具")
    commands = parser.add_subparsers(dest="command", required=True)

    learn = commands.add_parser("learn", help="从演示数据学习组合模型")
    learn.add_argument("--config", required=True, help="流水线配置文件(JSON)")
    learn.add_argument("--out", help="输出目录，覆盖配置中的 output_dir")
    learn.add_argument("--workers", type=int, help="子系统学习并行线程数")

    verify = commands.add_parser("verify", help="复算模型的全部证书")
    verify.add_argument("model", help="模型文件")
    verify.add_argument("--samples", type=int, default=10000)
    verify.add_argument("--seed", type=int, default=42)
    verify.add_argument("--radius", type=float, help="采样球半径，缺省为2倍最大演示范数")
    verify.add_argument("--tol", type=float, default=1e-7)

    simulate = commands.add_parser("simulate", help="积分学习到的向量场")
    simulate.add_argument("model", help="模型文件")
    simulate.add_argument("--from", dest="start", default="demo-starts", help="demo-starts 或 x1,x2,...")
    simulate.add_argument("--t-max", type=float, default=10.0)
    simulate.add_argument("--dt", type=float, default=0.01)
    simulate.add_argument("--out", required=True, help="输出目录")

    export = commands.add_parser("export-plot", help="导出仿真与演示叠加的绘图数据")
    export.add_argument("model", help="模型文件")
    export.add_argument("data", help="演示数据文件")
    export.add_argument("--t-max", type=float, default=10.0)
    export.add_argument("--dt", type=float, default=0.01)
    export.add_argument("--data-dt", type=float, help="CSV数据的采样周期，缺省取模型记录的配置")
    export.add_argument("--out", required=True, help="输出目录")

    compare = commands.add_parser("compare", help="组合式学习与单体基线对比")
    compare.add_argument("--config", required=True, help="流水线配置文件(JSON)")
    compare.add_argument("--out", help="输出目录")
    return parser


def cmd_learn(args) -> int:
    config = load_config(args.config)
    if args.workers is not None:
        config = config.model_copy(update={"workers": max(1, args.workers)})
    result = pipeline_service.learn(config, args.out)
    print(dumps({
        "model": str(result.model_path),
        "summary": str(result.summary_path),
        "certificate_eig": result.model.certificate_eig,
        "mse": result.summary["mse"],
        "timings": result.summary["timings"],
    }), end="")
    return 0


def cmd_verify(args) -> int:
    try:
        options = VerifyOptions(samples=args.samples, seed=args.seed, radius=args.radius, tol=args.tol)
    except ValidationError as e:
        raise ConfigValidationError(f"验证参数无效: {e.errors()[0].get('msg')}")
    reports = pipeline_service.verify(args.model, options)
    print(dumps({"reports": [report.to_dict() for report in reports]}), end="")
    pipeline_service.require_passed(reports)
    return 0


def cmd_simulate(args) -> int:
    result = pipeline_service.simulate(args.model, parse_start(args.start), args.t_max, args.dt, args.out)
    print(dumps(result.summary), end="")
    return 0


def cmd_export_plot(args) -> int:
    result = pipeline_service.export_plot(args.model, args.data, args.out, args.t_max, args.dt, args.data_dt)
    print(dumps({name: str(path) for name, path in result.paths.items()}), end="")
    return 0


def cmd_compare(args) -> int:
    table = pipeline_service.compare(load_config(args.config), args.out)
    print(table.to_string(index=False))
    return 0


COMMANDS = {
    "learn": cmd_learn,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "export-plot": cmd_export_plot,
    "compare": cmd_compare,
}


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except Exception as e:
        return handle_cli_error(e)


if __name__ == "__main__":
    sys.exit(main())
