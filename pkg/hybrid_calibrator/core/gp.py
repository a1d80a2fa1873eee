"""
GP - ガウス過程回帰
RBF-ARD カーネル、周辺尤度、事前分布付き MAP ハイパーパラメータ推定、予測分布

入力は生の単位 [v0 (m/s), psi (deg)] のまま使い、出力は平均 0・分散 1 に標準化してから学習します。
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.linalg import cholesky, cho_solve, solve_triangular, LinAlgError
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.special import expit, log_expit, logit

logger = logging.getLogger(__name__)

# 事前分布: sigma_f ~ U(0.1, 1), l_i ~ U(1, 50), sigma ~ HalfNormal(5)
SIGNAL_STD_BOUNDS = (0.1, 1.0)
LENGTHSCALE_BOUNDS = (1.0, 50.0)
NOISE_STD_SCALE = 5.0

JITTER_FACTOR = 1e-10
JITTER_MAX_DOUBLINGS = 8
INPUT_DIM = 2


class GPFitError(RuntimeError):
    """すべての初期点で MAP 推定に失敗"""


@dataclass(frozen=True)
class GPHyperparams:
    """GP ハイパーパラメータ φ = [sigma_f², l1, l2, sigma²]（標準化出力の単位）"""
    signal_var: float
    lengthscales: Tuple[float, ...]
    noise_var: float

    def __post_init__(self):
        object.__setattr__(self, 'lengthscales', tuple(float(l) for l in self.lengthscales))
        if not self.signal_var > 0:
            raise ValueError(f"signal_var は正である必要があります: {self.signal_var}")
        if not self.noise_var > 0:
            raise ValueError(f"noise_var は正である必要があります: {self.noise_var}")
        if len(self.lengthscales) != INPUT_DIM:
            raise ValueError(f"lengthscales は {INPUT_DIM} 次元である必要があります: {self.lengthscales}")
        if not all(l > 0 for l in self.lengthscales):
            raise ValueError(f"lengthscales は正である必要があります: {self.lengthscales}")

    @property
    def signal_std(self) -> float:
        return math.sqrt(self.signal_var)

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.noise_var)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'signal_var': self.signal_var,
            'lengthscales': list(self.lengthscales),
            'noise_var': self.noise_var,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GPHyperparams':
        return cls(
            signal_var=float(data['signal_var']),
            lengthscales=tuple(data['lengthscales']),
            noise_var=float(data['noise_var']),
        )


@dataclass(frozen=True)
class PredictiveDist:
    """予測分布（潜在関数の平均と分散、生の単位）"""
    mean: float
    variance: float


def kernel_rbf_ard(a: Sequence[float], b: Sequence[float], hyper: GPHyperparams) -> float:
    """k(a, b) = sigma_f²·exp(-½·Σ (a_i - b_i)²/l_i²)"""
    diff = (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) / np.asarray(hyper.lengthscales)
    return float(hyper.signal_var * np.exp(-0.5 * np.dot(diff, diff)))


def kernel_matrix(A: np.ndarray, B: np.ndarray, hyper: GPHyperparams) -> np.ndarray:
    """カーネル行列 K(A, B)"""
    scale = np.asarray(hyper.lengthscales)
    sq = cdist(np.atleast_2d(A) / scale, np.atleast_2d(B) / scale, 'sqeuclidean')
    return hyper.signal_var * np.exp(-0.5 * sq)


def _factorize(X: np.ndarray, hyper: GPHyperparams) -> np.ndarray:
    """C = K + sigma²·I のコレスキー分解（失敗時はジッターを倍増）"""
    K = kernel_matrix(X, X, hyper)
    C = K + hyper.noise_var * np.eye(len(X))
    jitter = JITTER_FACTOR * float(np.mean(np.diag(K)))

    for attempt in range(JITTER_MAX_DOUBLINGS + 1):
        try:
            return cholesky(C + jitter * np.eye(len(X)), lower=True)
        except LinAlgError:
            logger.debug(f"コレスキー分解に失敗 (jitter={jitter:.3e}, 試行 {attempt + 1})")
            jitter *= 2.0

    raise LinAlgError("ジッターを加えてもコレスキー分解できません")


def _log_likelihood_from_factor(L: np.ndarray, y: np.ndarray) -> float:
    alpha = cho_solve((L, True), y)
    n = len(y)
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2.0 * math.pi))


def log_marginal_likelihood(X: np.ndarray, y: np.ndarray, hyper: GPHyperparams) -> float:
    """log N(y | 0, K + sigma²·I)"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(X) != len(y):
        raise ValueError(f"X の行数 ({len(X)}) と y の長さ ({len(y)}) が一致しません")
    return _log_likelihood_from_factor(_factorize(X, hyper), y)


def _in_support(hyper: GPHyperparams) -> bool:
    low, high = SIGNAL_STD_BOUNDS
    if not low < hyper.signal_std < high:
        return False
    low, high = LENGTHSCALE_BOUNDS
    return all(low < l < high for l in hyper.lengthscales)


def log_hyper_prior(hyper: GPHyperparams) -> float:
    """ハイパーパラメータの対数事前密度（sigma_f, l_i, sigma の尺度で）"""
    if not _in_support(hyper):
        return -math.inf

    sf_low, sf_high = SIGNAL_STD_BOUNDS
    l_low, l_high = LENGTHSCALE_BOUNDS
    value = stats.uniform.logpdf(hyper.signal_std, loc=sf_low, scale=sf_high - sf_low)
    value += sum(stats.uniform.logpdf(l, loc=l_low, scale=l_high - l_low) for l in hyper.lengthscales)
    value += stats.halfnorm.logpdf(hyper.noise_std, scale=NOISE_STD_SCALE)
    return float(value)


def log_hyper_posterior(X: np.ndarray, y: np.ndarray, hyper: GPHyperparams) -> float:
    """周辺尤度 + 事前分布（台の外では -inf）"""
    prior = log_hyper_prior(hyper)
    if not math.isfinite(prior):
        return -math.inf
    return log_marginal_likelihood(X, y, hyper) + prior


def _hyper_from_unconstrained(u: np.ndarray) -> GPHyperparams:
    """logit / log 変換空間からハイパーパラメータへ"""
    sf_low, sf_high = SIGNAL_STD_BOUNDS
    l_low, l_high = LENGTHSCALE_BOUNDS
    signal_std = sf_low + (sf_high - sf_low) * expit(u[0])
    lengthscales = tuple(l_low + (l_high - l_low) * expit(u[1:1 + INPUT_DIM]))
    noise_std = math.exp(u[-1])
    return GPHyperparams(signal_std ** 2, lengthscales, noise_std ** 2)


def _log_jacobian(u: np.ndarray) -> float:
    """変換 u -> (sigma_f, l_i, sigma) の対数ヤコビアン"""
    sf_low, sf_high = SIGNAL_STD_BOUNDS
    l_low, l_high = LENGTHSCALE_BOUNDS
    bounded = np.asarray(u[:1 + INPUT_DIM], dtype=float)
    widths = np.array([sf_high - sf_low] + [l_high - l_low] * INPUT_DIM)
    return float(np.sum(np.log(widths) + log_expit(bounded) + log_expit(-bounded)) + u[-1])


def log_unconstrained_posterior(X: np.ndarray, y: np.ndarray, u: np.ndarray) -> float:
    """
    変換空間での対数事後密度（MAP 推定の目的関数）

    sigma -> 0 や sigma_f -> 上限で周辺尤度が平坦になっても、ヤコビアンが
    境界で -inf に落ちるので最適点は台の内側に留まります。
    """
    value = log_hyper_posterior(X, y, _hyper_from_unconstrained(u))
    if not math.isfinite(value):
        return -math.inf
    return value + _log_jacobian(u)


def _unconstrained_from_prior_draw(rng: np.random.Generator) -> np.ndarray:
    """事前分布から初期点を引き、変換空間へ"""
    sf_low, sf_high = SIGNAL_STD_BOUNDS
    l_low, l_high = LENGTHSCALE_BOUNDS
    signal_std = rng.uniform(sf_low, sf_high)
    lengthscales = rng.uniform(l_low, l_high, size=INPUT_DIM)
    noise_std = abs(rng.normal(0.0, NOISE_STD_SCALE))
    return np.concatenate([
        [logit((signal_std - sf_low) / (sf_high - sf_low))],
        logit((lengthscales - l_low) / (l_high - l_low)),
        [math.log(max(noise_std, 1e-6))],
    ])


@dataclass(frozen=True)
class GPFitConfig:
    """MAP 推定の設定"""
    restarts: int = 16
    seed: int = 0
    max_iter: int = 2000
    xatol: float = 1e-8
    max_workers: int = 1

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError(f"restarts は 1 以上である必要があります: {self.restarts}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter は 1 以上である必要があります: {self.max_iter}")


class GPModel:
    """学習済み GP（学習後は不変）"""

    def __init__(self, inputs: np.ndarray, targets_raw: np.ndarray, hyper: GPHyperparams,
                 target_shift: float, target_scale: float):
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        targets_raw = np.asarray(targets_raw, dtype=float)
        if len(inputs) < 1:
            raise ValueError("学習データが空です")
        if len(inputs) != len(targets_raw):
            raise ValueError(f"入力数 ({len(inputs)}) と目標値数 ({len(targets_raw)}) が一致しません")
        if not target_scale > 0:
            raise ValueError(f"target_scale は正である必要があります: {target_scale}")

        self.inputs = inputs
        self.targets_raw = targets_raw
        self.hyper = hyper
        self.target_shift = float(target_shift)
        self.target_scale = float(target_scale)

        self.chol = _factorize(self.inputs, hyper)
        self.alpha = cho_solve((self.chol, True), self.targets_standardized)

        for array in (self.inputs, self.targets_raw, self.chol, self.alpha):
            array.setflags(write=False)

    @classmethod
    def build(cls, inputs: np.ndarray, targets_raw: np.ndarray, hyper: GPHyperparams) -> 'GPModel':
        """目標値を標準化してモデルを構築"""
        shift, scale = standardization(targets_raw)
        return cls(inputs, targets_raw, hyper, shift, scale)

    @property
    def targets_standardized(self) -> np.ndarray:
        return (self.targets_raw - self.target_shift) / self.target_scale

    @property
    def n_train(self) -> int:
        return len(self.targets_raw)

    @property
    def noise_var_raw(self) -> float:
        """観測ノイズ分散（生の単位 m²）"""
        return self.hyper.noise_var * self.target_scale ** 2

    def log_marginal_likelihood(self) -> float:
        return _log_likelihood_from_factor(self.chol, self.targets_standardized)

    def predict_standardized(self, x_star: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """標準化単位の潜在平均・分散（クランプ前）"""
        x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
        k = kernel_matrix(x_star, self.inputs, self.hyper)
        mean = k @ self.alpha
        v = solve_triangular(self.chol, k.T, lower=True)
        var = self.hyper.signal_var - np.sum(v * v, axis=0)
        return mean, var

    def predict_many(self, x_star: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """生の単位の潜在平均・分散（負の分散は 0 にクランプ）"""
        mean, var = self.predict_standardized(x_star)
        mean = mean * self.target_scale + self.target_shift
        var = np.maximum(var, 0.0) * self.target_scale ** 2
        return mean, var

    def to_dict(self) -> Dict[str, Any]:
        """JSON 出力用の辞書（分解は読み込み時に再計算）"""
        return {
            'inputs': self.inputs.tolist(),
            'targets_raw': self.targets_raw.tolist(),
            'target_shift': self.target_shift,
            'target_scale': self.target_scale,
            'hyper': self.hyper.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GPModel':
        return cls(
            inputs=np.asarray(data['inputs'], dtype=float),
            targets_raw=np.asarray(data['targets_raw'], dtype=float),
            hyper=GPHyperparams.from_dict(data['hyper']),
            target_shift=float(data['target_shift']),
            target_scale=float(data['target_scale']),
        )


def standardization(y: np.ndarray) -> Tuple[float, float]:
    """平均 0・分散 1 にする shift と scale（定数列は scale = 1）"""
    y = np.asarray(y, dtype=float)
    shift = float(np.mean(y))
    scale = float(np.std(y))
    if not scale > 0:
        scale = 1.0
    return shift, scale


def predict(model: GPModel, x_star: Sequence[float]) -> PredictiveDist:
    """x* における予測分布（潜在関数）"""
    mean, var = model.predict_many(np.asarray(x_star, dtype=float).reshape(1, -1))
    return PredictiveDist(mean=float(mean[0]), variance=float(var[0]))


def _run_start(index: int, u0: np.ndarray, X: np.ndarray, y: np.ndarray,
               cfg: GPFitConfig) -> Optional[Tuple[int, float, np.ndarray]]:
    """一つの初期点からの Nelder-Mead"""

    def objective(u: np.ndarray) -> float:
        try:
            value = log_unconstrained_posterior(X, y, u)
        except (LinAlgError, ValueError, OverflowError):
            return math.inf
        return -value if math.isfinite(value) else math.inf

    initial = objective(u0)
    if not math.isfinite(initial):
        logger.warning(f"GP 初期点 {index} で目的関数が評価できません")
        return None

    result = minimize(
        objective, u0, method='Nelder-Mead',
        options={'xatol': cfg.xatol, 'fatol': cfg.xatol, 'maxiter': cfg.max_iter, 'maxfev': 4 * cfg.max_iter},
    )
    best_u, best_value = (result.x, result.fun) if result.fun <= initial else (u0, initial)
    if not math.isfinite(best_value):
        return None
    return index, -float(best_value), np.asarray(best_u)


def fit_map(X: np.ndarray, y_raw: np.ndarray, restarts: int = 16, seed: int = 0,
            cfg: Optional[GPFitConfig] = None) -> GPModel:
    """
    多点スタート Nelder-Mead による MAP ハイパーパラメータ推定

    Args:
        X: 入力行列 N×2 [v0, psi]
        y_raw: 目標値（生の単位）
        restarts: 初期点の数
        seed: 初期点抽出の乱数シード
        cfg: 詳細設定（指定時は restarts/seed より優先）

    Returns:
        GPModel: 学習済みモデル
    """
    if cfg is None:
        cfg = GPFitConfig(restarts=restarts, seed=seed)

    X = np.atleast_2d(np.asarray(X, dtype=float))
    y_raw = np.asarray(y_raw, dtype=float)
    if len(X) != len(y_raw):
        raise ValueError(f"X の行数 ({len(X)}) と y の長さ ({len(y_raw)}) が一致しません")
    if len(X) < 1:
        raise ValueError("学習データが空です")
    if len(X) < 2:
        logger.warning("学習データが 1 件のため MAP 推定はほぼ事前分布で決まります")

    # 行の並びに依存しないよう正規順に並べ替える
    order = np.lexsort((y_raw, X[:, 1], X[:, 0]))
    X, y_raw = X[order], y_raw[order]

    shift, scale = standardization(y_raw)
    y = (y_raw - shift) / scale

    rng = np.random.default_rng(cfg.seed)
    starts = [_unconstrained_from_prior_draw(rng) for _ in range(cfg.restarts)]

    if cfg.max_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_workers) as executor:
            outcomes = list(executor.map(lambda args: _run_start(args[0], args[1], X, y, cfg), enumerate(starts)))
    else:
        outcomes = [_run_start(i, u0, X, y, cfg) for i, u0 in enumerate(starts)]

    successes: List[Tuple[int, float, np.ndarray]] = [o for o in outcomes if o is not None]
    if not successes:
        raise GPFitError(f"GP の MAP 推定がすべての初期点 ({cfg.restarts}) で失敗しました")

    # 最大の対数事後密度、同値なら最小の初期点番号
    best_index, best_value, best_u = max(successes, key=lambda o: (o[1], -o[0]))
    hyper = _hyper_from_unconstrained(best_u)

    logger.info(
        f"GP MAP 推定完了: sigma_f²={hyper.signal_var:.4g}, l={tuple(round(l, 3) for l in hyper.lengthscales)}, "
        f"sigma²={hyper.noise_var:.4g}, log posterior={best_value:.4f} (初期点 {best_index}, "
        f"成功 {len(successes)}/{cfg.restarts})"
    )
    return GPModel(X, y_raw, hyper, shift, scale)


def save_model(model: GPModel, path: str) -> str:
    """GP モデルを JSON で保存"""
    output_path = Path(path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, 'w', encoding='utf-8') as f:
        json.dump(model.to_dict(), f, indent=2, ensure_ascii=False)
    logger.info(f"GP モデルを保存しました: {output_path}")
    return str(output_path)


def load_model(path: str) -> GPModel:
    """JSON から GP モデルを読み込み（分解は再計算）"""
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    return GPModel.from_dict(data)
