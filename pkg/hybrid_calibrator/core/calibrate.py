"""
Calibrate - 簡易物理モデルのベイズ較正
重力パラメータ g と観測精度 τ の事後分布を適応型ランダムウォーク Metropolis で推定

事前分布:
    1/g ~ U(0.001, 1)
    τ   ~ Gamma(shape=0.25, rate=2.5)   （平均 0.1、shape-rate 表記）
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .data import Dataset
from .physics import parabolic_range

logger = logging.getLogger(__name__)

LogTarget = Callable[[np.ndarray], float]
ProgressCallback = Callable[[int, int, str, str], None]

ACCEPTANCE_WARN_RANGE = (0.05, 0.95)
# 経験共分散による提案分布の適応を始めるステップ数
COVARIANCE_ADAPT_START = 200
ROBBINS_MONRO_EXPONENT = 0.6


@dataclass(frozen=True)
class SimplePrior:
    """簡易モデルの事前分布"""
    inv_g_low: float = 0.001
    inv_g_high: float = 1.0
    tau_shape: float = 0.25
    tau_rate: float = 2.5

    def __post_init__(self):
        if not 0 < self.inv_g_low < self.inv_g_high:
            raise ValueError(f"0 < inv_g_low < inv_g_high である必要があります: {self.inv_g_low}, {self.inv_g_high}")
        if not (self.tau_shape > 0 and self.tau_rate > 0):
            raise ValueError(f"tau_shape と tau_rate は正である必要があります: {self.tau_shape}, {self.tau_rate}")

    @property
    def inv_g_width(self) -> float:
        return self.inv_g_high - self.inv_g_low

    def log_prior(self, inv_g: float, tau: float) -> float:
        """log p(1/g) + log p(τ)"""
        if not (self.inv_g_low < inv_g < self.inv_g_high) or not tau > 0:
            return -math.inf
        log_uniform = -math.log(self.inv_g_width)
        log_gamma = (self.tau_shape * math.log(self.tau_rate) - gammaln(self.tau_shape)
                     + (self.tau_shape - 1.0) * math.log(tau) - self.tau_rate * tau)
        return log_uniform + log_gamma


@dataclass(frozen=True)
class MCMCConfig:
    """MCMC の設定"""
    chains: int = 4
    burn_in: int = 2000
    kept: int = 1200
    seed: int = 0
    target_accept: float = 0.35
    max_workers: int = 1

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError(f"chains は 1 以上である必要があります: {self.chains}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in は 0 以上である必要があります: {self.burn_in}")
        if self.kept < 1:
            raise ValueError(f"kept は 1 以上である必要があります: {self.kept}")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError(f"target_accept は (0, 1) である必要があります: {self.target_accept}")


@dataclass(frozen=True)
class SamplerMeta:
    """サンプラーのメタ情報"""
    chains: int
    burn_in: int
    kept: int
    acceptance_rate: float
    seed: int
    chain_acceptance: Tuple[float, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['chain_acceptance'] = list(self.chain_acceptance)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'SamplerMeta':
        return cls(
            chains=int(data['chains']),
            burn_in=int(data['burn_in']),
            kept=int(data['kept']),
            acceptance_rate=float(data['acceptance_rate']),
            seed=int(data['seed']),
            chain_acceptance=tuple(float(a) for a in data.get('chain_acceptance', ())),
        )


@dataclass(frozen=True)
class PosteriorSamples:
    """θ = g と τ の事後サンプル（チェーン順に連結）"""
    g_draws: np.ndarray
    tau_draws: np.ndarray
    meta: SamplerMeta

    def __post_init__(self):
        g = np.asarray(self.g_draws, dtype=float)
        tau = np.asarray(self.tau_draws, dtype=float)
        if g.ndim != 1 or len(g) < 1 or g.shape != tau.shape:
            raise ValueError(f"g と tau のサンプル数が不正です: {g.shape}, {tau.shape}")
        if not np.all((g > 1.0) & (g < 1000.0)):
            raise ValueError("g のサンプルが (1, 1000) の範囲外です")
        if not np.all(tau > 0):
            raise ValueError("tau のサンプルは正である必要があります")
        g.setflags(write=False)
        tau.setflags(write=False)
        object.__setattr__(self, 'g_draws', g)
        object.__setattr__(self, 'tau_draws', tau)

    def __len__(self) -> int:
        return len(self.g_draws)

    def select(self, n: int, seed: Optional[int] = None) -> np.ndarray:
        """
        n 個のサンプル番号を非復元一様抽出（n 以上保持していなければ全件）

        Returns:
            np.ndarray: 昇順のサンプル番号
        """
        if n >= len(self):
            return np.arange(len(self))
        rng = np.random.default_rng(self.meta.seed if seed is None else seed)
        return np.sort(rng.choice(len(self), size=n, replace=False))


@dataclass(frozen=True)
class ParameterSummary:
    """一つのパラメータの要約統計"""
    mean: float
    sd: float
    q025: float
    q25: float
    q50: float
    q75: float
    q975: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


class SimpleLogPosterior:
    """簡易モデルの対数事後密度（データ依存の定数を前計算）"""

    def __init__(self, ds: Dataset, prior: SimplePrior = SimplePrior()):
        self.prior = prior
        inputs = ds.inputs
        # η(x, g) = c·(1/g)
        self.factors = parabolic_range(1.0, inputs[:, 0], inputs[:, 1])
        self.targets = ds.targets
        self.n = len(ds)

    def __call__(self, g: float, tau: float) -> float:
        if not (g > 0 and tau > 0):
            return -math.inf
        inv_g = 1.0 / g
        log_prior = self.prior.log_prior(inv_g, tau)
        if not math.isfinite(log_prior):
            return -math.inf
        residual = self.targets - self.factors * inv_g
        log_lik = 0.5 * self.n * math.log(tau / (2.0 * math.pi)) - 0.5 * tau * float(residual @ residual)
        return log_lik + log_prior

    def to_unconstrained(self, g: float, tau: float) -> np.ndarray:
        s = (1.0 / g - self.prior.inv_g_low) / self.prior.inv_g_width
        return np.array([math.log(s) - math.log1p(-s), math.log(tau)])

    def from_unconstrained(self, z: np.ndarray) -> Tuple[float, float]:
        s = 1.0 / (1.0 + math.exp(-z[0])) if z[0] > -700 else 0.0
        inv_g = self.prior.inv_g_low + self.prior.inv_g_width * s
        tau = math.exp(z[1]) if z[1] < 700 else math.inf
        g = 1.0 / inv_g if inv_g > 0 else math.inf
        return g, tau

    def log_target(self, z: np.ndarray) -> float:
        """変換空間 (logit s, log τ) での対数密度（ヤコビアン込み）"""
        g, tau = self.from_unconstrained(z)
        value = self(g, tau)
        if not math.isfinite(value):
            return -math.inf
        # du/dz1 = width·s(1-s),  dτ/dz2 = τ
        log_jacobian = (math.log(self.prior.inv_g_width)
                        - np.logaddexp(0.0, -z[0]) - np.logaddexp(0.0, z[0]) + z[1])
        return value + float(log_jacobian)


def log_posterior_simple(ds: Dataset, g: float, tau: float, prior: SimplePrior = SimplePrior()) -> float:
    """
    Σ log N(y_i | η(x_i, g), 1/τ) + log p(1/g) + log p(τ)

    1/g が (0.001, 1) の外なら -inf
    """
    return SimpleLogPosterior(ds, prior)(g, tau)


class AdaptiveMetropolis:
    """
    適応型ランダムウォーク Metropolis

    バーンイン中は提案共分散を経験共分散に合わせ、尺度を Robbins-Monro で
    目標採択率へ調整します。バーンイン後は提案分布を固定します。
    """

    def __init__(self, log_target: LogTarget, dim: int, target_accept: float = 0.35,
                 initial_cov: Optional[np.ndarray] = None):
        self.log_target = log_target
        self.dim = dim
        self.target_accept = target_accept
        self.initial_cov = np.eye(dim) * 0.01 if initial_cov is None else np.asarray(initial_cov, dtype=float)
        self.logger = logging.getLogger(__name__)

    def run(self, x0: np.ndarray, burn_in: int, kept: int,
            rng: np.random.Generator) -> Tuple[np.ndarray, float]:
        """
        チェーンを一本実行

        Returns:
            (kept×dim のサンプル, バーンイン後の採択率)
        """
        x = np.asarray(x0, dtype=float).copy()
        log_p = self.log_target(x)
        if not math.isfinite(log_p):
            raise ValueError(f"初期点の対数密度が有限ではありません: {x0}")

        log_scale = math.log(2.38 / math.sqrt(self.dim))
        cov = self.initial_cov.copy()
        chol = np.linalg.cholesky(cov)

        # バーンイン標本の経験平均・共分散（Welford）
        running_mean = x.copy()
        running_m2 = np.zeros((self.dim, self.dim))
        n_seen = 1

        for step in range(1, burn_in + 1):
            proposal = x + math.exp(log_scale) * chol @ rng.standard_normal(self.dim)
            log_p_new = self.log_target(proposal)
            accept_prob = math.exp(min(0.0, log_p_new - log_p)) if math.isfinite(log_p_new) else 0.0
            if rng.uniform() < accept_prob:
                x, log_p = proposal, log_p_new

            log_scale += step ** (-ROBBINS_MONRO_EXPONENT) * (accept_prob - self.target_accept)

            n_seen += 1
            delta = x - running_mean
            running_mean += delta / n_seen
            running_m2 += np.outer(delta, x - running_mean)

            if step >= COVARIANCE_ADAPT_START and step % 50 == 0:
                empirical = running_m2 / (n_seen - 1) + 1e-10 * np.eye(self.dim)
                try:
                    chol = np.linalg.cholesky(empirical)
                except np.linalg.LinAlgError:
                    self.logger.debug(f"経験共分散が正定値ではないため更新をスキップ (step {step})")
                else:
                    if step == COVARIANCE_ADAPT_START:
                        # 初期共分散から切り替えるときは尺度も初期値に戻す
                        log_scale = math.log(2.38 / math.sqrt(self.dim))

        samples = np.empty((kept, self.dim))
        accepted = 0
        scale = math.exp(log_scale)
        for i in range(kept):
            proposal = x + scale * chol @ rng.standard_normal(self.dim)
            log_p_new = self.log_target(proposal)
            accept_prob = math.exp(min(0.0, log_p_new - log_p)) if math.isfinite(log_p_new) else 0.0
            if rng.uniform() < accept_prob:
                x, log_p = proposal, log_p_new
                accepted += 1
            samples[i] = x

        return samples, accepted / kept


def _chain_seeds(seed: int, chains: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(chains)


def sample_target(log_target: LogTarget, initial_points: List[np.ndarray], cfg: MCMCConfig,
                  initial_cov: Optional[np.ndarray] = None,
                  progress_callback: Optional[ProgressCallback] = None) -> Tuple[np.ndarray, List[float]]:
    """
    任意の対数密度から複数チェーンでサンプリング

    Args:
        log_target: 変換空間での対数密度
        initial_points: チェーンごとの初期点
        cfg: MCMC 設定

    Returns:
        (チェーン順に連結したサンプル, チェーンごとの採択率)
    """
    if len(initial_points) != cfg.chains:
        raise ValueError(f"初期点の数 ({len(initial_points)}) とチェーン数 ({cfg.chains}) が一致しません")

    dim = len(initial_points[0])
    sampler = AdaptiveMetropolis(log_target, dim, cfg.target_accept, initial_cov)
    seeds = _chain_seeds(cfg.seed, cfg.chains)

    def run_chain(index: int) -> Tuple[np.ndarray, float]:
        rng = np.random.default_rng(seeds[index])
        result = sampler.run(initial_points[index], cfg.burn_in, cfg.kept, rng)
        if progress_callback:
            progress_callback(index + 1, cfg.chains, "MCMC", f"chain {index}")
        return result

    if cfg.max_workers > 1 and cfg.chains > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.max_workers, cfg.chains)) as executor:
            results = list(executor.map(run_chain, range(cfg.chains)))
    else:
        results = [run_chain(i) for i in range(cfg.chains)]

    # チェーン番号順に連結（完了順に依存しない）
    draws = np.concatenate([samples for samples, _ in results], axis=0)
    acceptance = [rate for _, rate in results]
    return draws, acceptance


def _negated(log_target: LogTarget) -> Callable[[np.ndarray], float]:
    """最小化用に符号を反転（-inf は大きな有限値へ）"""
    def objective(z: np.ndarray) -> float:
        value = log_target(z)
        return -value if math.isfinite(value) else 1e300
    return objective


def _initial_points(posterior: SimpleLogPosterior, cfg: MCMCConfig) -> List[np.ndarray]:
    """事前分布から引いた点を局所最適化し、小さく揺らしたものを初期点とする"""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(cfg.chains + 1)[-1])
    points = []
    for _ in range(cfg.chains):
        inv_g = rng.uniform(posterior.prior.inv_g_low, posterior.prior.inv_g_high)
        tau = rng.gamma(posterior.prior.tau_shape, 1.0 / posterior.prior.tau_rate)
        tau = min(max(tau, 1e-8), 1e8)
        z0 = posterior.to_unconstrained(1.0 / inv_g, tau)

        result = minimize(
            _negated(posterior.log_target), z0, method='Nelder-Mead',
            options={'xatol': 1e-6, 'fatol': 1e-8, 'maxiter': 4000},
        )
        start = result.x if math.isfinite(posterior.log_target(result.x)) else z0
        points.append(start + 0.01 * rng.standard_normal(2))
    return points


def sample_posterior(ds: Dataset, cfg: MCMCConfig = MCMCConfig(),
                     prior: SimplePrior = SimplePrior(),
                     progress_callback: Optional[ProgressCallback] = None) -> PosteriorSamples:
    """
    簡易モデルの事後分布から g, τ をサンプリング

    Args:
        ds: 学習データ
        cfg: MCMC 設定
        prior: 事前分布

    Returns:
        PosteriorSamples: chains × kept 個のサンプル
    """
    if len(ds) < 1:
        raise ValueError("データセットが空です")

    posterior = SimpleLogPosterior(ds, prior)
    logger.info(f"MCMC 開始: {ds.name} ({cfg.chains}チェーン × (バーンイン {cfg.burn_in} + 保持 {cfg.kept}), seed={cfg.seed})")

    draws, acceptance = sample_target(
        posterior.log_target, _initial_points(posterior, cfg), cfg,
        initial_cov=np.diag([0.05, 0.1]), progress_callback=progress_callback,
    )

    g_draws = np.empty(len(draws))
    tau_draws = np.empty(len(draws))
    for i, z in enumerate(draws):
        g_draws[i], tau_draws[i] = posterior.from_unconstrained(z)

    overall = float(np.mean(acceptance))
    low, high = ACCEPTANCE_WARN_RANGE
    if not low <= overall <= high:
        logger.warning(f"MCMC 採択率が範囲外です: {overall:.3f}（期待範囲 [{low}, {high}]）")

    meta = SamplerMeta(
        chains=cfg.chains, burn_in=cfg.burn_in, kept=cfg.kept,
        acceptance_rate=overall, seed=cfg.seed, chain_acceptance=tuple(acceptance),
    )
    samples = PosteriorSamples(g_draws, tau_draws, meta)
    logger.info(f"MCMC 完了: {len(samples)}サンプル, 採択率={overall:.3f}, g 平均={np.mean(g_draws):.3f}")
    return samples


def _summarize(values: np.ndarray) -> ParameterSummary:
    q = np.quantile(values, [0.025, 0.25, 0.5, 0.75, 0.975], method='linear')
    return ParameterSummary(
        mean=float(np.mean(values)),
        sd=float(np.std(values)),
        q025=float(q[0]), q25=float(q[1]), q50=float(q[2]), q75=float(q[3]), q975=float(q[4]),
    )


def posterior_summary(s: PosteriorSamples) -> Dict[str, ParameterSummary]:
    """パラメータごとの平均・標準偏差・分位点"""
    return {'g': _summarize(s.g_draws), 'tau': _summarize(s.tau_draws)}


def split_half_check(s: PosteriorSamples) -> Dict[str, float]:
    """
    前半と後半の平均の差を標準誤差で割った値（|z| が 2 を超えると収束が疑わしい）

    チェーンごとに前半・後半へ分けてから結合します。
    """
    result = {}
    kept = s.meta.kept
    for name, values in (('g', s.g_draws), ('tau', s.tau_draws)):
        if len(values) < 4 or kept < 2:
            result[name] = 0.0
            continue
        chains = values.reshape(-1, kept) if len(values) == s.meta.chains * kept else values.reshape(1, -1)
        half = chains.shape[1] // 2
        first = chains[:, :half].ravel()
        second = chains[:, half:2 * half].ravel()
        se = math.sqrt(np.var(first) / len(first) + np.var(second) / len(second))
        result[name] = 0.0 if se == 0 else float((np.mean(first) - np.mean(second)) / se)
    return result
