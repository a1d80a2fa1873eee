"""
Data - 実験データの生成と組み込みデータセット
真のモデルにシード付き観測ノイズを加えた模擬実験と、参照実験表の学習データ A/B/C を提供

乱数: numpy の PCG64 を SeedSequence(seed, spawn_key=(draw_index,)) で初期化し、
正規乱数は numpy の ziggurat 法 (Generator.standard_normal) で生成します。
同じ (seed, draw_index) からは常に同じ値が得られます。
最適条件の検証観測は spawn_key=(EVALUATION_STREAM, crc32(ラベル)) の別系列を使い、学習用の系列とは重なりません。
"""

import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .physics import PhysicsParams, LaunchInput, impact_distance

logger = logging.getLogger(__name__)

EVALUATION_STREAM = 1_000_003


@dataclass(frozen=True)
class NoiseSpec:
    """観測ノイズの設定"""
    sigma: float = 5.0   # m
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma は 0 以上である必要があります: {self.sigma}")
        if self.seed < 0:
            raise ValueError(f"seed は 0 以上の整数である必要があります: {self.seed}")


@dataclass(frozen=True)
class Experiment:
    """一回の実験（角度は度）"""
    id: str
    psi: float
    v0: float
    y_obs: float

    def __post_init__(self):
        if not math.isfinite(self.y_obs):
            raise ValueError(f"y_obs が有限ではありません (id={self.id}): {self.y_obs}")
        # 範囲検証は LaunchInput に任せる
        LaunchInput(self.v0, self.psi)

    @property
    def launch(self) -> LaunchInput:
        return LaunchInput(self.v0, self.psi)


@dataclass(frozen=True)
class Dataset:
    """実験の順序付き集合"""
    name: str
    experiments: Tuple[Experiment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'experiments', tuple(self.experiments))
        if not self.experiments:
            raise ValueError(f"データセット {self.name!r} が空です")
        ids = [e.id for e in self.experiments]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ValueError(f"データセット {self.name!r} に重複 id があります: {duplicates}")

    def __len__(self) -> int:
        return len(self.experiments)

    @property
    def inputs(self) -> np.ndarray:
        """GP 入力行列 [v0, psi]（N×2、生の単位）"""
        return np.array([[e.v0, e.psi] for e in self.experiments], dtype=float)

    @property
    def targets(self) -> np.ndarray:
        """観測着弾距離 (m)"""
        return np.array([e.y_obs for e in self.experiments], dtype=float)

    @property
    def launches(self) -> List[LaunchInput]:
        return [e.launch for e in self.experiments]


# 参照実験表（角度 deg, 初速 m/s, 着弾距離 m）
REFERENCE_EXPERIMENTS: Dict[str, Tuple[float, float, float]] = {
    "1": (25.0, 60.0, 118.18),
    "2": (30.0, 70.0, 159.79),
    "3": (36.0, 80.0, 174.14),
    "4": (45.0, 90.0, 181.67),
    "5": (60.0, 75.0, 143.21),
    "6a": (10.0, 42.0, 47.305),
    "6b": (80.0, 53.0, 54.294),
    "6c": (85.0, 71.0, 43.239),
}

BASE_EXPERIMENTS = ("1", "2", "3", "4", "5")
SIXTH_EXPERIMENT = {"A": "6a", "B": "6b", "C": "6c"}
BUILTIN_LABELS = tuple(SIXTH_EXPERIMENT.keys())


def noise_draw(noise: NoiseSpec, draw_index: int) -> float:
    """(seed, draw_index) で決まる標準正規乱数"""
    if draw_index < 0:
        raise ValueError(f"draw_index は 0 以上である必要があります: {draw_index}")
    sequence = np.random.SeedSequence(entropy=noise.seed, spawn_key=(draw_index,))
    return float(np.random.Generator(np.random.PCG64(sequence)).standard_normal())


def observe(params: PhysicsParams, launch: LaunchInput, noise: NoiseSpec, draw_index: int) -> float:
    """真のモデルの着弾距離 + 観測ノイズ ε ~ N(0, sigma²)"""
    y = impact_distance(params, launch)
    if noise.sigma == 0:
        return y
    return y + noise.sigma * noise_draw(noise, draw_index)


def evaluation_noise_draw(noise: NoiseSpec, label: str) -> float:
    """検証観測用の標準正規乱数（ラベルごとに独立、学習用の draw_index とは別系列）"""
    key = zlib.crc32(label.encode('utf-8'))
    sequence = np.random.SeedSequence(entropy=noise.seed, spawn_key=(EVALUATION_STREAM, key))
    return float(np.random.Generator(np.random.PCG64(sequence)).standard_normal())


def observe_evaluation(params: PhysicsParams, launch: LaunchInput, noise: NoiseSpec, label: str) -> float:
    """最適条件での真のモデルの検証観測（label は "データセット/モデル" など）"""
    y = impact_distance(params, launch)
    if noise.sigma == 0:
        return y
    return y + noise.sigma * evaluation_noise_draw(noise, label)


def reference_designs() -> Dict[str, LaunchInput]:
    """参照実験表の 8 つの実験条件"""
    return {key: LaunchInput(v0, psi) for key, (psi, v0, _) in REFERENCE_EXPERIMENTS.items()}


def builtin_dataset(label: str) -> Dataset:
    """
    組み込みデータセットの取得

    Args:
        label: "A" / "B" / "C"

    Returns:
        Dataset: 実験 1-5 と 6a/6b/6c のいずれか
    """
    key = label.strip().upper()
    if key not in SIXTH_EXPERIMENT:
        raise ValueError(f"不明なデータセットラベルです: {label!r}（A/B/C のいずれか）")

    rows = BASE_EXPERIMENTS + (SIXTH_EXPERIMENT[key],)
    experiments = [
        Experiment(id=row, psi=REFERENCE_EXPERIMENTS[row][0], v0=REFERENCE_EXPERIMENTS[row][1], y_obs=REFERENCE_EXPERIMENTS[row][2])
        for row in rows
    ]
    return Dataset(name=key, experiments=tuple(experiments))


def generate_dataset(designs: Sequence[LaunchInput], params: PhysicsParams,
                     noise: NoiseSpec, name: str = "generated",
                     ids: Sequence[str] = None) -> Dataset:
    """
    真のモデルから学習データを生成

    Args:
        designs: 実験条件のリスト
        params: 真の物理定数
        noise: 観測ノイズ設定（i 番目の実験は draw_index = i）
        name: データセット名
        ids: 実験 id（省略時は 1, 2, ...）

    Returns:
        Dataset: 生成されたデータセット
    """
    designs = list(designs)
    if not designs:
        raise ValueError("実験条件が空です")
    if ids is None:
        ids = [str(i + 1) for i in range(len(designs))]
    elif len(ids) != len(designs):
        raise ValueError(f"ids の数 ({len(ids)}) と実験条件の数 ({len(designs)}) が一致しません")

    experiments = []
    for index, (exp_id, launch) in enumerate(zip(ids, designs)):
        y = observe(params, launch, noise, index)
        experiments.append(Experiment(id=str(exp_id), psi=launch.psi, v0=launch.v0, y_obs=y))

    logger.info(f"データセット生成: {name} ({len(experiments)}件, sigma={noise.sigma}, seed={noise.seed})")
    return Dataset(name=name, experiments=tuple(experiments))
