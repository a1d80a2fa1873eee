"""
Surrogate - 較正済み予測モデル
簡易物理モデル・GP ブラックボックス・ハイブリッド（物理 + GP 不一致項）の
三種類を共通の予測インターフェースで提供
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .calibrate import MCMCConfig, PosteriorSamples, SimplePrior, sample_posterior
from .data import Dataset
from .gp import GPFitConfig, GPModel, fit_map
from .physics import LaunchInput, parabolic_range

logger = logging.getLogger(__name__)


class SurrogateKind(Enum):
    """予測モデルの種類"""
    SIMPLE = "simple"
    BLACKBOX_GP = "gp"
    HYBRID = "hybrid"

    @property
    def display_name(self) -> str:
        return {"simple": "Simple", "gp": "GP", "hybrid": "Hybrid"}[self.value]

    @classmethod
    def parse(cls, text: str) -> 'SurrogateKind':
        key = text.strip().lower()
        for kind in cls:
            if kind.value == key or kind.display_name.lower() == key:
                return kind
        raise ValueError(f"不明なモデル種類です: {text!r}（simple/gp/hybrid のいずれか）")


@dataclass(frozen=True)
class PerSamplePrediction:
    """一つの事後サンプルに対する観測の予測（平均と全分散）"""
    mean: float
    variance: float


@dataclass(frozen=True)
class CalibratedSurrogate:
    """較正済みモデル（不変）"""
    kind: SurrogateKind
    dataset_name: str
    posterior: Optional[PosteriorSamples] = None
    gp: Optional[GPModel] = None
    residual_reference_g: Optional[float] = None

    def __post_init__(self):
        needs_posterior = self.kind in (SurrogateKind.SIMPLE, SurrogateKind.HYBRID)
        needs_gp = self.kind in (SurrogateKind.BLACKBOX_GP, SurrogateKind.HYBRID)
        if needs_posterior != (self.posterior is not None):
            raise ValueError(f"{self.kind.value}: posterior の有無が種類と一致しません")
        if needs_gp != (self.gp is not None):
            raise ValueError(f"{self.kind.value}: GP の有無が種類と一致しません")
        if (self.kind is SurrogateKind.HYBRID) != (self.residual_reference_g is not None):
            raise ValueError(f"{self.kind.value}: residual_reference_g はハイブリッドのみ必要です")

    @property
    def n_samples(self) -> int:
        """θ サンプル数（GP は θ を持たないので 1）"""
        return len(self.posterior) if self.posterior is not None else 1


def fit_simple(ds: Dataset, mcmc_cfg: MCMCConfig = MCMCConfig(),
               prior: SimplePrior = SimplePrior(), progress_callback=None) -> CalibratedSurrogate:
    """簡易物理モデルの較正"""
    posterior = sample_posterior(ds, mcmc_cfg, prior, progress_callback)
    return CalibratedSurrogate(kind=SurrogateKind.SIMPLE, dataset_name=ds.name, posterior=posterior)


def fit_gp_blackbox(ds: Dataset, fit_cfg: GPFitConfig = GPFitConfig()) -> CalibratedSurrogate:
    """観測 (x, y) に直接 GP を学習"""
    if len(ds) < 2:
        raise ValueError(f"GP の学習には 2 件以上の実験が必要です: {len(ds)}件")
    model = fit_map(ds.inputs, ds.targets, cfg=fit_cfg)
    return CalibratedSurrogate(kind=SurrogateKind.BLACKBOX_GP, dataset_name=ds.name, gp=model)


def hybrid_residuals(ds: Dataset, reference_g: float) -> np.ndarray:
    """残差 y_i - η(x_i, g_ref)"""
    inputs = ds.inputs
    return ds.targets - parabolic_range(reference_g, inputs[:, 0], inputs[:, 1])


def fit_hybrid(ds: Dataset, mcmc_cfg: MCMCConfig = MCMCConfig(), fit_cfg: GPFitConfig = GPFitConfig(),
               prior: SimplePrior = SimplePrior(), progress_callback=None) -> CalibratedSurrogate:
    """
    ハイブリッドモデルの較正

    g を先に推定し、事後平均 g での残差に GP を学習します。
    """
    if len(ds) < 2:
        raise ValueError(f"ハイブリッドモデルの学習には 2 件以上の実験が必要です: {len(ds)}件")

    simple = fit_simple(ds, mcmc_cfg, prior, progress_callback)
    reference_g = float(np.mean(simple.posterior.g_draws))
    residuals = hybrid_residuals(ds, reference_g)
    logger.info(f"ハイブリッド残差: g_ref={reference_g:.4f}, 残差範囲=[{residuals.min():.2f}, {residuals.max():.2f}] m")

    model = fit_map(ds.inputs, residuals, cfg=fit_cfg)
    return CalibratedSurrogate(
        kind=SurrogateKind.HYBRID, dataset_name=ds.name, posterior=simple.posterior,
        gp=model, residual_reference_g=reference_g,
    )


def _gp_observation(model: GPModel, x: LaunchInput) -> Tuple[float, float]:
    """GP の潜在平均と、潜在分散 + 観測ノイズ分散（生の単位）"""
    mean, var = model.predict_many(np.array([[x.v0, x.psi]]))
    return float(mean[0]), float(var[0]) + model.noise_var_raw


def predict_samples(s: CalibratedSurrogate, x: LaunchInput,
                    indices: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    指定した事後サンプル群に対する予測平均・分散（ベクトル化版）

    Args:
        s: 較正済みモデル
        x: 射撃条件
        indices: サンプル番号（None なら全件。GP では無視され長さ 1 の配列を返す）

    Returns:
        (平均の配列, 分散の配列)
    """
    if s.kind is SurrogateKind.BLACKBOX_GP:
        mean, variance = _gp_observation(s.gp, x)
        return np.array([mean]), np.array([variance])

    g = s.posterior.g_draws if indices is None else s.posterior.g_draws[indices]
    eta = parabolic_range(g, x.v0, x.psi)

    if s.kind is SurrogateKind.SIMPLE:
        tau = s.posterior.tau_draws if indices is None else s.posterior.tau_draws[indices]
        return eta, 1.0 / tau

    gp_mean, gp_variance = _gp_observation(s.gp, x)
    return eta + gp_mean, np.full_like(eta, gp_variance)


def predict_for_sample(s: CalibratedSurrogate, x: LaunchInput, sample_index: int) -> PerSamplePrediction:
    """事後サンプル一つに対する観測の予測分布"""
    if s.kind is not SurrogateKind.BLACKBOX_GP:
        if not 0 <= sample_index < len(s.posterior):
            raise IndexError(f"sample_index が範囲外です: {sample_index}（サンプル数 {len(s.posterior)}）")
    means, variances = predict_samples(s, x, np.array([sample_index]))
    return PerSamplePrediction(mean=float(means[0]), variance=max(float(variances[0]), 0.0))
