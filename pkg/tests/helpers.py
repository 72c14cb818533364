"""
测试用的数据生成器与手工模型
"""
import json
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from lpvds.models.composed import ComposedModel, GlobalRates
from lpvds.models.gmm import GmmModel
from lpvds.models.subsystem import SubsystemModel, SubsystemRates
from lpvds.services.composer import composer
from lpvds.services.interconnection_service import interconnection_service

# 两个标量子系统互为输入: ẋ1 = -2x1 + 0.3x2, ẋ2 = -2x2 + 0.3x1
COUPLED_A = np.array([[-2.0, 0.3], [0.3, -2.0]])


def linear_trajectories(A: np.ndarray, starts: Sequence[Sequence[float]], dt: float,
                        steps: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """线性系统的精确轨迹与速度"""
    A = np.asarray(A, dtype=float)
    step = expm(A * dt)
    result = []
    for start in starts:
        states = [np.asarray(start, dtype=float)]
        for _ in range(steps - 1):
            states.append(step @ states[-1])
        states = np.vstack(states)
        result.append((states, states @ A.T))
    return result


def write_json_demos(path: Path, trajectories, dt: float, offset=None, with_velocities: bool = True) -> Path:
    """写出JSON演示文件，offset 为平衡点"""
    items = []
    for states, velocities in trajectories:
        shifted = states if offset is None else states + np.asarray(offset, dtype=float)
        item = {"states": shifted.tolist(), "dt": dt}
        if with_velocities:
            item["velocities"] = velocities.tolist()
        items.append(item)
    path.write_text(json.dumps({"trajectories": items}), encoding="utf-8")
    return path


def write_csv_demos(path: Path, trajectories, with_velocities: bool = False) -> Path:
    """写出CSV演示文件"""
    n = trajectories[0][0].shape[1]
    header = [f"x{i + 1}" for i in range(n)]
    if with_velocities:
        header += [f"dx{i + 1}" for i in range(n)]
    lines = [",".join(header + ["traj_id"])]
    for index, (states, velocities) in enumerate(trajectories):
        for row in range(states.shape[0]):
            values = list(states[row])
            if with_velocities:
                values += list(velocities[row])
            lines.append(",".join(repr(float(v)) for v in values) + f",t{index + 1}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def single_gmm(dim: int) -> GmmModel:
    """单分量GMM，γ ≡ 1"""
    return GmmModel(
        weights=np.ones(1),
        means=np.zeros((1, dim)),
        covariances=np.eye(dim)[None],
    )


def make_subsystem(index: int, A, B, P, D11, D12, D22, delta_lo: float = 0.5, delta_hi: float = 2.0,
                   xi: float = 0.1, d_max: float = 10.0) -> SubsystemModel:
    """K=1 的手工子系统"""
    A = np.asarray(A, dtype=float).reshape(1, *np.atleast_2d(A).shape)
    n = A.shape[1]
    B = np.atleast_2d(np.asarray(B, dtype=float))
    B = B.reshape(1, n, B.shape[-1])
    p = B.shape[2]
    return SubsystemModel(
        index=index,
        A=A,
        B=B,
        P=np.asarray(P, dtype=float).reshape(n, n),
        D11=np.asarray(D11, dtype=float).reshape(p, p),
        D12=np.asarray(D12, dtype=float).reshape(p, n),
        D22=np.asarray(D22, dtype=float).reshape(n, n),
        rates=SubsystemRates(delta_lo=delta_lo, delta_hi=delta_hi, xi=xi),
        gmm=single_gmm(n),
        d_max=d_max,
    )


def coupled_pair_model() -> ComposedModel:
    """COUPLED_A 的两个标量子系统，手工给出满足耗散不等式的 (P, D)"""
    spec = interconnection_service.fully_connected_scalar(2)
    subsystems = [
        make_subsystem(i, [[-2.0]], [[0.3]], [[1.0]], [[0.5]], [[0.3]], [[-1.5]])
        for i in range(2)
    ]
    return composer.compose(spec, subsystems, mu=[1.0, 1.0])


def decoupled_model(rates: Sequence[float]) -> ComposedModel:
    """ẋ_i = -a_i x_i 的解耦标量子系统，P_i = 1"""
    n = len(rates)
    spec = interconnection_service.build_interconnection(n, [((i,), ()) for i in range(n)])
    subsystems = [
        make_subsystem(i, [[-a]], np.zeros((1, 0)), [[1.0]], np.zeros((0, 0)), np.zeros((0, 1)), [[-1.0]])
        for i, a in enumerate(rates)
    ]
    return composer.compose(spec, subsystems, mu=np.ones(n))


def scalar_model(a: float = 1.0) -> ComposedModel:
    """ẋ = -a x"""
    return decoupled_model([a])


def zero_model(n: int) -> ComposedModel:
    """A = 0 的解耦模型，不要求证书"""
    spec = interconnection_service.build_interconnection(n, [((i,), ()) for i in range(n)])
    subsystems = [
        make_subsystem(i, [[0.0]], np.zeros((1, 0)), [[1.0]], np.zeros((0, 0)), np.zeros((0, 1)), [[0.0]])
        for i in range(n)
    ]
    return ComposedModel(
        spec=spec,
        subsystems=subsystems,
        mu=np.ones(n),
        rates=GlobalRates(0.5, 2.0 * n, 0.1),
        nominal_rates=GlobalRates(0.5 * n, 2.0 * n, 0.1),
        certificate_eig=0.0,
    )


def write_config(path: Path, data_path: Path, **overrides) -> Path:
    """最小流水线配置"""
    document = {
        "data": {"path": str(data_path)},
        "topology": "fully-connected-scalar",
        "equilibrium": [1.0, -1.0],
        "gmm": {"k": 1},
        "verify": {"samples": 2000},
        "output_dir": str(path.parent / "output"),
    }
    document.update(overrides)
    path.write_text(json.dumps(document), encoding="utf-8")
    return path
