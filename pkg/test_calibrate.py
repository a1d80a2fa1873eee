"""
Hybrid Calibrator 較正テスト
簡易モデルの事後密度、適応型 Metropolis、事後サンプルの確認
"""

import math
import sys
from pathlib import Path

import numpy as np
from scipy import stats

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from hybrid_calibrator.core.calibrate import (
    MCMCConfig, PosteriorSamples, SamplerMeta, SimpleLogPosterior, SimplePrior,
    log_posterior_simple, posterior_summary, sample_posterior, sample_target, split_half_check,
)
from hybrid_calibrator.core.data import builtin_dataset
from hybrid_calibrator.core.physics import simple_range

QUICK = MCMCConfig(chains=2, burn_in=1000, kept=1000, seed=1)


def test_log_posterior_value():
    """対数事後密度が直接計算と一致"""
    ds = builtin_dataset("A")
    g, tau = 20.0, 0.02
    eta = np.array([simple_range(g, launch) for launch in ds.launches])
    expected = (
        stats.norm.logpdf(ds.targets, loc=eta, scale=1.0 / math.sqrt(tau)).sum()
        + stats.uniform.logpdf(1.0 / g, loc=0.001, scale=0.999)
        + stats.gamma.logpdf(tau, a=0.25, scale=1.0 / 2.5)
    )
    assert abs(log_posterior_simple(ds, g, tau) - expected) < 1e-9
    print("✓ 対数事後密度")


def test_log_posterior_support():
    """事前分布の台の外は -inf"""
    ds = builtin_dataset("B")
    assert log_posterior_simple(ds, 0.5, 0.1) == -math.inf      # 1/g = 2
    assert log_posterior_simple(ds, 2000.0, 0.1) == -math.inf   # 1/g = 0.0005
    assert log_posterior_simple(ds, 9.8, 0.0) == -math.inf
    assert log_posterior_simple(ds, 9.8, -1.0) == -math.inf
    assert math.isfinite(log_posterior_simple(ds, 9.8, 0.1))

    try:
        SimplePrior(inv_g_low=0.5, inv_g_high=0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("不正な事前分布が受け付けられました")
    print("✓ 事前分布の台")


def test_unconstrained_round_trip():
    """変換空間との往復"""
    posterior = SimpleLogPosterior(builtin_dataset("C"))
    for g, tau in ((9.8, 0.1), (35.0, 0.005), (500.0, 3.0)):
        g2, tau2 = posterior.from_unconstrained(posterior.to_unconstrained(g, tau))
        assert math.isclose(g, g2, rel_tol=1e-10) and math.isclose(tau, tau2, rel_tol=1e-12)
    print("✓ 変換空間の往復")


def test_sampler_gaussian_target():
    """二次元正規分布の平均と共分散を回復"""
    mean = np.array([1.0, -2.0])
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    precision = np.linalg.inv(cov)

    def log_target(z: np.ndarray) -> float:
        d = z - mean
        return float(-0.5 * d @ precision @ d)

    cfg = MCMCConfig(chains=4, burn_in=2000, kept=25000, seed=12)
    starts = [np.array([0.0, 0.0]), np.array([2.0, -1.0]), np.array([1.0, -3.0]), np.array([0.5, -2.5])]
    draws, acceptance = sample_target(log_target, starts, cfg)

    assert draws.shape == (100000, 2)
    np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.05)
    empirical = np.cov(draws, rowvar=False)
    np.testing.assert_allclose(empirical, cov, rtol=0.10)
    assert all(0.15 < a < 0.6 for a in acceptance), acceptance
    print(f"✓ 正規分布ターゲット: 平均 {draws.mean(axis=0).round(3)}, 採択率 {np.round(acceptance, 3)}")


def test_sampler_determinism():
    """同じシードなら並列数に関係なく同じサンプル"""
    ds = builtin_dataset("A")
    serial = sample_posterior(ds, QUICK)
    parallel = sample_posterior(ds, MCMCConfig(chains=2, burn_in=1000, kept=1000, seed=1, max_workers=2))
    np.testing.assert_array_equal(serial.g_draws, parallel.g_draws)
    np.testing.assert_array_equal(serial.tau_draws, parallel.tau_draws)

    other = sample_posterior(ds, MCMCConfig(chains=2, burn_in=1000, kept=1000, seed=2))
    assert not np.array_equal(serial.g_draws, other.g_draws)
    print("✓ サンプラーの決定性")


def test_biased_gravity_dataset_c():
    """データセット C では g が大きく偏る"""
    samples = sample_posterior(builtin_dataset("C"), MCMCConfig(chains=2, burn_in=2000, kept=1500, seed=1))
    summary = posterior_summary(samples)
    assert len(samples) == 3000
    assert 29.0 <= summary['g'].mean <= 43.0, summary['g'].mean
    assert np.all(samples.g_draws > 9.8)
    assert summary['g'].q025 <= summary['g'].q50 <= summary['g'].q975
    assert 0.05 <= samples.meta.acceptance_rate <= 0.95
    print(f"✓ データセット C の g 事後平均 {summary['g'].mean:.3f} m/s²")


def test_posterior_samples():
    """事後サンプルの検証・読み取り専用・抽出"""
    meta = SamplerMeta(chains=2, burn_in=10, kept=5, acceptance_rate=0.3, seed=4)
    g = np.linspace(10.0, 20.0, 10)
    tau = np.linspace(0.01, 0.1, 10)
    samples = PosteriorSamples(g, tau, meta)

    try:
        samples.g_draws[0] = 1.0
    except ValueError:
        pass
    else:
        raise AssertionError("事後サンプルが書き換え可能です")

    for bad_g, bad_tau in ((np.full(10, 0.5), tau), (g, -tau), (g[:5], tau)):
        try:
            PosteriorSamples(bad_g, bad_tau, meta)
        except ValueError:
            continue
        raise AssertionError("不正な事後サンプルが受け付けられました")

    chosen = samples.select(4)
    assert len(chosen) == 4 and len(set(chosen.tolist())) == 4
    assert np.all(np.diff(chosen) > 0)
    np.testing.assert_array_equal(chosen, samples.select(4))
    np.testing.assert_array_equal(samples.select(50), np.arange(10))

    assert SamplerMeta.from_dict(meta.to_dict()) == meta
    z = split_half_check(samples)
    assert set(z) == {'g', 'tau'} and all(math.isfinite(v) for v in z.values())
    print("✓ 事後サンプル")


TESTS = [
    ("対数事後密度テスト", test_log_posterior_value),
    ("事前分布の台テスト", test_log_posterior_support),
    ("変換空間テスト", test_unconstrained_round_trip),
    ("正規分布ターゲットテスト", test_sampler_gaussian_target),
    ("決定性テスト", test_sampler_determinism),
    ("g の偏りテスト", test_biased_gravity_dataset_c),
    ("事後サンプルテスト", test_posterior_samples),
]


def main():
    """メインテスト関数"""
    print("Hybrid Calibrator 較正テスト")
    print("=" * 50)

    passed = 0
    failed = 0
    for test_name, test_func in TESTS:
        try:
            test_func()
            passed += 1
        except Exception as e:
            print(f"❌ {test_name} 失敗: {e}")
            failed += 1

    print("\n" + "=" * 50)
    print(f"✓ 成功: {passed}")
    print(f"❌ 失敗: {failed}")
    return 0 if failed == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
