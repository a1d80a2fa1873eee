"""
Optimize - 単段階確率計画法による射撃条件の最適化
事後サンプルと Gauss-Hermite 求積で期待効用を評価し、グリッド探索で最大化

グリッドの各行（psi ごと）をスレッドプールで並列評価し、完了順に関係なく同じ結果を組み立てます。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, asdict
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .data import NoiseSpec, observe_evaluation
from .physics import LaunchInput, PhysicsParams
from .surrogate import CalibratedSurrogate, PerSamplePrediction, SurrogateKind, predict_samples

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int, str, str], None]

DEFAULT_GH_NODES = 7
DEFAULT_N_SAMPLES = 4500


@dataclass(frozen=True)
class UtilityConfig:
    """効用関数の設定"""
    target: float = 100.0     # m
    miss_cap: float = 100.0   # m

    def __post_init__(self):
        if not self.target > 0:
            raise ValueError(f"target は正である必要があります: {self.target}")
        if not self.miss_cap > 0:
            raise ValueError(f"miss_cap は正である必要があります: {self.miss_cap}")


def _axis(lower: float, upper: float, step: float, name: str) -> np.ndarray:
    count = (upper - lower) / step
    if abs(count - round(count)) > 1e-9 * max(1.0, count):
        raise ValueError(f"{name} の刻み {step} が範囲 [{lower}, {upper}] を等分しません")
    return lower + step * np.arange(int(round(count)) + 1)


@dataclass(frozen=True)
class GridSpec:
    """探索グリッド"""
    v0_min: float = 40.0
    v0_max: float = 100.0
    v0_step: float = 2.5
    psi_min: float = 1.0
    psi_max: float = 90.0
    psi_step: float = 1.0

    def __post_init__(self):
        if not (self.v0_min < self.v0_max and self.v0_step > 0):
            raise ValueError(f"v0 の範囲または刻みが不正です: {self.v0_min}, {self.v0_max}, {self.v0_step}")
        if not (self.psi_min < self.psi_max and self.psi_step > 0):
            raise ValueError(f"psi の範囲または刻みが不正です: {self.psi_min}, {self.psi_max}, {self.psi_step}")
        if self.v0_min <= 0 or self.psi_min <= 0 or self.psi_max > 90:
            raise ValueError("グリッドは v0 > 0, 0 < psi <= 90 の範囲である必要があります")
        # 刻みが範囲を等分するかの検証
        _axis(self.psi_min, self.psi_max, self.psi_step, "psi")
        _axis(self.v0_min, self.v0_max, self.v0_step, "v0")

    @property
    def psi_values(self) -> np.ndarray:
        return _axis(self.psi_min, self.psi_max, self.psi_step, "psi")

    @property
    def v0_values(self) -> np.ndarray:
        return _axis(self.v0_min, self.v0_max, self.v0_step, "v0")

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.psi_values), len(self.v0_values)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class ObjectiveSurface:
    """期待効用の曲面（行 = psi、列 = v0）"""
    grid: GridSpec
    values: np.ndarray
    argmax: LaunchInput
    max_value: float

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values の形状 {self.values.shape} がグリッド {self.grid.shape} と一致しません")

    def rows(self):
        """CSV 出力用の行 (psi, v0, 期待効用) を行優先で列挙"""
        for i, psi in enumerate(self.grid.psi_values):
            for j, v0 in enumerate(self.grid.v0_values):
                yield float(psi), float(v0), float(self.values[i, j])


@dataclass
class RunReport:
    """一回の最適化結果の報告"""
    dataset: str
    model: str
    argmax_psi_deg: float
    argmax_v0_mps: float
    max_expected_utility: float
    expected_distance_m: float
    observed_distance_m: float
    seed: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunReport':
        fields = cls.__dataclass_fields__
        missing = [name for name in fields if name not in data]
        if missing:
            raise ValueError(f"実行レポートに必要な項目がありません: {missing}")
        return cls(
            dataset=str(data['dataset']),
            model=str(data['model']),
            argmax_psi_deg=float(data['argmax_psi_deg']),
            argmax_v0_mps=float(data['argmax_v0_mps']),
            max_expected_utility=float(data['max_expected_utility']),
            expected_distance_m=float(data['expected_distance_m']),
            observed_distance_m=float(data['observed_distance_m']),
            seed=int(data['seed']),
        )


def utility(miss, cfg: UtilityConfig = UtilityConfig()):
    """u = 1 - min(|miss|, cap)/cap（配列可）"""
    capped = np.minimum(np.abs(miss), cfg.miss_cap)
    result = 1.0 - capped / cfg.miss_cap
    return float(result) if np.ndim(result) == 0 else result


@lru_cache(maxsize=16)
def gauss_hermite_rule(nodes: int = DEFAULT_GH_NODES) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Hermite の節点と重み（Σw = √π）

    Returns:
        (節点, 重み)
    """
    if nodes < 1:
        raise ValueError(f"nodes は 1 以上である必要があります: {nodes}")
    xi, w = hermgauss(nodes)
    # hermgauss は Σw = √π に正規化済み
    xi.setflags(write=False)
    w.setflags(write=False)
    return xi, w


def _gh_expectations(means: np.ndarray, variances: np.ndarray, cfg: UtilityConfig,
                     nodes: int) -> np.ndarray:
    """各 (平均, 分散) に対する E[u(ȳ - y)]、y ~ N(平均, 分散)"""
    xi, w = gauss_hermite_rule(nodes)
    sd = np.sqrt(2.0 * np.maximum(variances, 0.0))
    y = means[:, None] + sd[:, None] * xi[None, :]
    return utility(cfg.target - y, cfg) @ w / math.sqrt(math.pi)


def gh_expected_utility(pred: PerSamplePrediction, cfg: UtilityConfig = UtilityConfig(),
                        nodes: int = DEFAULT_GH_NODES) -> float:
    """一つの予測分布に対する期待効用（Gauss-Hermite 求積）"""
    if pred.variance < 0:
        raise ValueError(f"variance は 0 以上である必要があります: {pred.variance}")
    if pred.variance == 0:
        return utility(cfg.target - pred.mean, cfg)
    value = _gh_expectations(np.array([pred.mean]), np.array([pred.variance]), cfg, nodes)[0]
    return float(min(max(value, 0.0), 1.0))


def sample_indices(s: CalibratedSurrogate, n_samples: int = DEFAULT_N_SAMPLES) -> Optional[np.ndarray]:
    """期待値に使う事後サンプル番号（GP では None）"""
    if s.posterior is None:
        return None
    return s.posterior.select(n_samples)


def expected_utility(s: CalibratedSurrogate, x: LaunchInput, cfg: UtilityConfig = UtilityConfig(),
                     n_samples: int = DEFAULT_N_SAMPLES, nodes: int = DEFAULT_GH_NODES,
                     indices: Optional[np.ndarray] = None) -> float:
    """
    E[u(ȳ - y)] を事後サンプル平均 × Gauss-Hermite 求積で近似

    Args:
        s: 較正済みモデル
        x: 射撃条件
        cfg: 効用設定
        n_samples: 使用する事後サンプル数
        nodes: 求積の節点数
        indices: 事前に選んだサンプル番号（グリッド探索で使い回す）

    Returns:
        float: [0, 1] の期待効用
    """
    if indices is None:
        indices = sample_indices(s, n_samples)
    means, variances = predict_samples(s, x, indices)
    values = _gh_expectations(means, variances, cfg, nodes)
    # 分散 0 のサンプルは求積ではなく効用そのもの
    exact = variances <= 0
    if np.any(exact):
        values = np.where(exact, utility(cfg.target - means, cfg), values)
    return float(np.clip(np.mean(values), 0.0, 1.0))


def expected_distance(s: CalibratedSurrogate, x: LaunchInput, n_samples: int = DEFAULT_N_SAMPLES) -> float:
    """事後サンプルで平均した予測着弾距離"""
    means, _ = predict_samples(s, x, sample_indices(s, n_samples))
    return float(np.mean(means))


def grid_search(s: CalibratedSurrogate, grid: GridSpec = GridSpec(), cfg: UtilityConfig = UtilityConfig(),
                n_samples: int = DEFAULT_N_SAMPLES, nodes: int = DEFAULT_GH_NODES,
                max_workers: int = 1, progress_callback: Optional[ProgressCallback] = None) -> ObjectiveSurface:
    """
    グリッド全点で期待効用を評価し最大点を求める

    同値の最大点は psi の小さい方、次に v0 の小さい方を選びます。
    """
    psi_values = grid.psi_values
    v0_values = grid.v0_values
    values = np.empty((len(psi_values), len(v0_values)))
    indices = sample_indices(s, n_samples)

    def evaluate_row(i: int) -> Tuple[int, np.ndarray]:
        row = np.array([
            expected_utility(s, LaunchInput(float(v0), float(psi_values[i])), cfg, n_samples, nodes, indices)
            for v0 in v0_values
        ])
        return i, row

    logger.info(
        f"グリッド探索開始: {s.kind.value}/{s.dataset_name} "
        f"({len(psi_values)}×{len(v0_values)} 点, サンプル {s.n_samples if indices is None else len(indices)})"
    )

    completed = 0
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {executor.submit(evaluate_row, i): i for i in range(len(psi_values))}
            for future in as_completed(futures):
                i, row = future.result()
                values[i] = row
                completed += 1
                if progress_callback:
                    progress_callback(completed, len(psi_values), "グリッド評価中", f"psi={psi_values[i]:g}")
    else:
        for i in range(len(psi_values)):
            _, values[i] = evaluate_row(i)
            completed += 1
            if progress_callback:
                progress_callback(completed, len(psi_values), "グリッド評価中", f"psi={psi_values[i]:g}")

    # 行優先の最初の最大値 = 最小 psi、次に最小 v0
    flat_index = int(np.argmax(values))
    i, j = np.unravel_index(flat_index, values.shape)
    argmax = LaunchInput(float(v0_values[j]), float(psi_values[i]))
    max_value = float(values[i, j])

    logger.info(f"グリッド探索完了: 最適 psi={argmax.psi:g}°, v0={argmax.v0:g} m/s, E[u]={max_value:.4f}")
    return ObjectiveSurface(grid=grid, values=values, argmax=argmax, max_value=max_value)


def evaluate_truth(x: LaunchInput, params: PhysicsParams, noise: NoiseSpec, label: str = "truth") -> float:
    """選んだ射撃条件で真のモデルを一回観測（ラベルごとに独立したノイズ）"""
    return observe_evaluation(params, x, noise, label)


def build_report(s: CalibratedSurrogate, surface: ObjectiveSurface, params: PhysicsParams,
                 noise: NoiseSpec, n_samples: int = DEFAULT_N_SAMPLES) -> RunReport:
    """最適化結果と真のモデルの観測から実行レポートを作成"""
    return RunReport(
        dataset=s.dataset_name,
        model=s.kind.value,
        argmax_psi_deg=surface.argmax.psi,
        argmax_v0_mps=surface.argmax.v0,
        max_expected_utility=surface.max_value,
        expected_distance_m=expected_distance(s, surface.argmax, n_samples),
        observed_distance_m=evaluate_truth(surface.argmax, params, noise, f"{s.dataset_name}/{s.kind.value}"),
        seed=noise.seed,
    )


def model_ordering_holds(max_values: Dict[SurrogateKind, float]) -> bool:
    """Hybrid > GP > Simple の順序が成り立つか"""
    return (max_values[SurrogateKind.HYBRID] > max_values[SurrogateKind.BLACKBOX_GP]
            > max_values[SurrogateKind.SIMPLE])
