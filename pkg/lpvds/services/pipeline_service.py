"""
流水线服务
串联数据准备、子系统学习、组合、验证、仿真与基线对比
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..models.composed import ComposedModel
from ..models.demonstration import DemonstrationSet, SubsystemData
from ..models.interconnection import InterconnectionSpec
from ..models.report import CertificateReport
from ..models.rollout import Rollout, Termination
from ..models.subsystem import SubsystemModel
from ..schemas.pipeline import DataSource, PipelineConfig, TopologyPreset, VerifyOptions, parse_config
from ..utils.exceptions import (
    CertificateViolationError,
    CompositionInfeasibleError,
    ConfigValidationError,
    DivergenceError,
    InsufficientDataError,
    IoError,
    ModelFormatError,
)
from ..utils.serialization import dump_json
from .composer import composer
from .demonstration_service import demonstration_service
from .gmm_service import gmm_service
from .interconnection_service import interconnection_service
from .simulator import simulator
from .subsystem_learner import subsystem_learner
from .verifier import verifier

logger = logging.getLogger(__name__)

MODEL_FILE = "model.json"
SUMMARY_FILE = "summary.json"
PLOT_FILE = "plot.csv"
ROLLOUTS_FILE = "rollouts.json"
SIMULATION_FILE = "simulation.json"


@dataclass
class LearnResult:
    """一次学习的产物"""
    model: ComposedModel
    summary: Dict[str, Any]
    model_path: Path
    summary_path: Path
    infeasible: Optional[CompositionInfeasibleError] = None


@dataclass
class SimulationResult:
    """一组仿真的产物"""
    rollouts: List[Rollout]
    summary: Dict[str, Any]
    paths: Dict[str, Path] = field(default_factory=dict)


class PipelineService:
    """流水线服务类"""

    @staticmethod
    def prepare_data(config: PipelineConfig) -> Tuple[DemonstrationSet, InterconnectionSpec]:
        """读取、平移、估计速度并锚定平衡点"""
        source = config.data
        demonstrations = demonstration_service.load_demonstrations(source.path, source.resolved_format(), source.dt)
        equilibrium = "auto" if isinstance(config.equilibrium, str) else np.asarray(config.equilibrium, dtype=float)
        demonstrations = demonstration_service.shift_to_origin(demonstrations, equilibrium)
        demonstrations = demonstration_service.estimate_velocities(demonstrations)
        demonstrations = demonstration_service.anchor_equilibrium(demonstrations)
        if demonstrations.sample_count < demonstrations.n + 1:
            raise InsufficientDataError(
                f"样本数 {demonstrations.sample_count} 少于 n+1 = {demonstrations.n + 1}",
                samples=demonstrations.sample_count,
            )
        spec = interconnection_service.resolve(config.topology, demonstrations.n)
        return demonstrations, spec

    @staticmethod
    def learn_one(data: SubsystemData, spec: InterconnectionSpec, config: PipelineConfig) -> SubsystemModel:
        """为单个子系统拟合GMM并交替求解"""
        subsystem = spec.subsystems[data.index]
        gmm = gmm_service.fit_best(data.x, config.gmm.candidates(), config.seed, config.gmm)
        logger.info(f"子系统 {data.index + 1}: GMM分量数 K={gmm.K}")
        fanout = spec.fanout[list(subsystem.state_coords)]
        return subsystem_learner.learn_subsystem(
            data,
            gmm,
            config.hyperparams_for(data.index),
            config.solver,
            fanout,
        )

    @staticmethod
    def learn(config: PipelineConfig, output_dir: Optional[Union[str, Path]] = None) -> LearnResult:
        """
        完整的学习流程: 数据准备 → 子系统学习 → 组合

        组合不可行时仍写出不带证书的模型，再抛出 CompositionInfeasibleError
        """
        out = Path(output_dir or config.output_dir)
        timings = {}

        started = time.perf_counter()
        demonstrations, spec = PipelineService.prepare_data(config)
        datasets = demonstration_service.project_to_subsystems(demonstrations, spec)
        timings["data"] = time.perf_counter() - started

        started = time.perf_counter()
        if config.workers > 1 and len(datasets) > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as executor:
                subsystems = list(executor.map(lambda data: PipelineService.learn_one(data, spec, config), datasets))
        else:
            subsystems = [PipelineService.learn_one(data, spec, config) for data in datasets]
        timings["subsystems"] = time.perf_counter() - started

        started = time.perf_counter()
        infeasible = None
        try:
            model = composer.compose(spec, subsystems, options=config.composition, solver=config.solver,
                                     equilibrium=demonstrations.equilibrium)
        except CompositionInfeasibleError as e:
            logger.warning(f"组合不可行，写出不带证书的模型: {e.detail}")
            infeasible = e
            model = composer.compose(spec, subsystems, mu=np.full(spec.N, config.composition.mu_min),
                                     options=config.composition, equilibrium=demonstrations.equilibrium,
                                     require_certificate=False)
        timings["composition"] = time.perf_counter() - started

        model.metadata = {
            "config": config.effective(),
            "max_demo_norm": demonstrations.max_state_norm(),
            "composition_tol": config.composition.tol,
        }
        mse = simulator.mse(model, demonstrations)
        summary = {
            "certified": model.certified,
            "certificate_eig": model.certificate_eig,
            "mu": model.mu,
            "rates": model.rates.to_dict(),
            "nominal_rates": model.nominal_rates.to_dict(),
            "mse": mse,
            "samples": demonstrations.sample_count,
            "subsystems": [
                {
                    "index": sub_model.index + 1,
                    "K": sub_model.K,
                    "objective": sub_model.objective,
                    "outer_iterations": len(sub_model.objective_history),
                    "pullbacks": sub_model.pullbacks,
                    "stage_p_margin": sub_model.stage_p_margin,
                }
                for sub_model in subsystems
            ],
            "timings": timings,
            "config": model.metadata["config"],
        }
        if infeasible is not None:
            summary["warning"] = "composition_infeasible"
            summary["witness"] = infeasible.context.get("witness")

        model_path = composer.save_model(model, out / MODEL_FILE)
        summary_path = dump_json(out / SUMMARY_FILE, summary)
        logger.info(
            f"学习完成: MSE={mse:.6e}, certificate_eig={model.certificate_eig:.3e}, "
            f"用时 数据={timings['data']:.2f}s 子系统={timings['subsystems']:.2f}s 组合={timings['composition']:.2f}s"
        )
        result = LearnResult(model=model, summary=summary, model_path=model_path,
                             summary_path=summary_path, infeasible=infeasible)
        if infeasible is not None:
            raise infeasible
        return result

    @staticmethod
    def verify(model_path: Union[str, Path], options: Optional[VerifyOptions] = None) -> List[CertificateReport]:
        """读取模型并复算全部证书"""
        model = composer.load_model(model_path)
        return verifier.verify_model(model, options)

    @staticmethod
    def require_passed(reports: Sequence[CertificateReport]) -> None:
        """有检查未通过时抛出 CertificateViolationError"""
        failed = [f"{report.subject}.{check.name}" for report in reports for check in report.failed()]
        if failed:
            raise CertificateViolationError(f"证书检查未通过: {', '.join(failed)}", failed=failed)

    @staticmethod
    def _recorded_source(model: ComposedModel) -> Optional[DataSource]:
        """模型 metadata 中记录的数据来源"""
        content = model.metadata.get("config")
        if not isinstance(content, dict):
            return None
        return parse_config(content).data

    @staticmethod
    def load_model_demonstrations(model: ComposedModel,
                                  data_path: Optional[Union[str, Path]] = None,
                                  data_dt: Optional[float] = None) -> DemonstrationSet:
        """
        按模型的平衡点平移演示数据

        未给出 data_path 时使用模型 metadata 中记录的配置；
        采样周期依次取 data_dt、记录的配置、DataSource 默认值
        """
        if data_dt is not None and not data_dt > 0:
            raise ConfigValidationError("采样周期必须为正", field="data_dt")
        source = PipelineService._recorded_source(model)
        if data_path is None:
            if source is None:
                raise ModelFormatError("模型中没有记录数据来源")
            demonstrations = demonstration_service.load_demonstrations(
                source.path, source.resolved_format(), data_dt or source.dt
            )
        else:
            if data_dt is None:
                data_dt = source.dt if source is not None else DataSource.model_fields["dt"].default
            demonstrations = demonstration_service.load_demonstrations(data_path, dt=data_dt)
        demonstrations = demonstration_service.shift_to_origin(demonstrations, model.equilibrium)
        return demonstration_service.estimate_velocities(demonstrations)

    @staticmethod
    def _rollouts(model: ComposedModel, starts: np.ndarray, t_max: float, dt: float) -> List[Rollout]:
        rollouts = [simulator.rollout(model, start, t_max, dt) for start in starts]
        for rollout in rollouts:
            if rollout.terminated == Termination.DIVERGED:
                raise DivergenceError(
                    "仿真轨迹发散",
                    start=[float(v) for v in rollout.start + model.equilibrium],
                )
        return rollouts

    @staticmethod
    def _write_simulation(model: ComposedModel, rollouts: List[Rollout],
                          demonstrations: Optional[DemonstrationSet], out: Path) -> SimulationResult:
        summary = {
            "rollouts": [
                {
                    "index": index + 1,
                    "start": rollout.start + model.equilibrium,
                    "terminated": rollout.terminated.value,
                    "final_time": float(rollout.times[-1]),
                    "final_norm": float(np.linalg.norm(rollout.final_state)),
                }
                for index, rollout in enumerate(rollouts)
            ],
        }
        if demonstrations is not None:
            summary["mse"] = simulator.mse(model, demonstrations)
        paths = {
            "plot": simulator.export_plot_data(rollouts, demonstrations, out / PLOT_FILE, n=model.n),
            "rollouts": simulator.export_rollouts_json(rollouts, out / ROLLOUTS_FILE),
            "summary": dump_json(out / SIMULATION_FILE, summary),
        }
        return SimulationResult(rollouts=rollouts, summary=summary, paths=paths)

    @staticmethod
    def simulate(model_path: Union[str, Path], start: Union[str, Sequence[float]], t_max: float, dt: float,
                 out_dir: Union[str, Path]) -> SimulationResult:
        """
        从演示起点或给定状态出发仿真

        给定状态使用原始坐标，内部按模型平衡点平移
        """
        model = composer.load_model(model_path)
        demonstrations = None
        if isinstance(start, str):
            demonstrations = PipelineService.load_model_demonstrations(model)
            starts = demonstrations.start_states()
        else:
            starts = np.atleast_2d(np.asarray(start, dtype=float)) - model.equilibrium
        rollouts = PipelineService._rollouts(model, starts, t_max, dt)
        return PipelineService._write_simulation(model, rollouts, demonstrations, Path(out_dir))

    @staticmethod
    def export_plot(model_path: Union[str, Path], data_path: Union[str, Path], out_dir: Union[str, Path],
                    t_max: float = 10.0, dt: float = 0.01,
                    data_dt: Optional[float] = None) -> SimulationResult:
        """用给定数据的起点仿真，写出与演示叠加的绘图数据"""
        model = composer.load_model(model_path)
        demonstrations = PipelineService.load_model_demonstrations(model, data_path, data_dt)
        rollouts = PipelineService._rollouts(model, demonstrations.start_states(), t_max, dt)
        return PipelineService._write_simulation(model, rollouts, demonstrations, Path(out_dir))

    @staticmethod
    def compare(config: PipelineConfig, output_dir: Optional[Union[str, Path]] = None) -> pd.DataFrame:
        """在同一数据上运行组合式学习与单体基线，输出MSE、证书状态和耗时"""
        out = Path(output_dir or config.output_dir)
        variants = [
            ("compositional", config),
            ("monolithic", config.model_copy(update={"topology": TopologyPreset.MONOLITHIC.value})),
        ]
        rows = []
        for name, variant in variants:
            try:
                summary = PipelineService.learn(variant, out / name).summary
            except CompositionInfeasibleError as e:
                logger.warning(f"{name}: 组合不可行: {e.detail}")
                summary = dict(e.context, certified=False, mse=float("nan"), timings={})
            timings = summary.get("timings", {})
            rows.append({
                "variant": name,
                "mse": summary.get("mse"),
                "certified": summary.get("certified"),
                "certificate_eig": summary.get("certificate_eig"),
                "subsystems_seconds": timings.get("subsystems"),
                "composition_seconds": timings.get("composition"),
                "total_seconds": sum(timings.values()) if timings else None,
            })
        table = pd.DataFrame(rows)
        target = out / "compare.csv"
        try:
            out.mkdir(parents=True, exist_ok=True)
            table.to_csv(target, index=False, float_format="%.10g")
        except OSError as e:
            raise IoError(f"写入对比表失败: {target}: {e}", path=str(target))
        logger.info(f"对比结果已写出: {target}")
        return table


# 全局流水线服务实例
pipeline_service = PipelineService()
