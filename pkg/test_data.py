"""
Hybrid Calibrator データテスト
模擬実験の生成、組み込みデータセット、CSV 入出力の確認
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from hybrid_calibrator.core.data import (
    BUILTIN_LABELS, Dataset, Experiment, NoiseSpec, builtin_dataset, generate_dataset,
    noise_draw, observe, reference_designs,
)
from hybrid_calibrator.core.physics import LaunchInput, PhysicsParams, impact_distance
from hybrid_calibrator.utils.csv_exporter import (
    DatasetFormatError, load_dataset, load_designs, save_dataset,
)

TRUTH = PhysicsParams()


def test_noise_determinism():
    """同じ (seed, draw_index) から同じノイズ"""
    noise = NoiseSpec(sigma=5.0, seed=7)
    assert noise_draw(noise, 3) == noise_draw(noise, 3)
    assert noise_draw(noise, 3) != noise_draw(noise, 4)
    assert noise_draw(noise, 3) != noise_draw(NoiseSpec(sigma=5.0, seed=8), 3)

    draws = np.array([noise_draw(NoiseSpec(seed=1), i) for i in range(2000)])
    assert abs(draws.mean()) < 0.1
    assert abs(draws.std() - 1.0) < 0.1
    print("✓ ノイズの決定性と分布")


def test_observe_without_noise():
    """sigma = 0 なら真値そのもの"""
    launch = LaunchInput(70.0, 30.0)
    assert observe(TRUTH, launch, NoiseSpec(sigma=0.0, seed=3), 0) == impact_distance(TRUTH, launch)
    print("✓ sigma=0 の観測")


def test_observe_noise_distribution():
    """10,000 回の観測で誤差の平均と標準偏差が N(0, sigma²) に合う"""
    launch = LaunchInput(60.0, 25.0)
    noise = NoiseSpec(sigma=5.0, seed=11)
    truth = impact_distance(TRUTH, launch)
    errors = np.array([observe(TRUTH, launch, noise, i) for i in range(10_000)]) - truth
    # 平均の標準誤差 0.05、標準偏差の標準誤差 約 0.035
    assert abs(errors.mean()) < 0.2, errors.mean()
    assert abs(errors.std(ddof=1) - 5.0) < 0.15, errors.std(ddof=1)
    print(f"✓ 観測誤差: 平均 {errors.mean():+.4f} m, 標準偏差 {errors.std(ddof=1):.4f} m")


def test_generate_dataset():
    """学習データ生成"""
    designs = list(reference_designs().values())
    noise = NoiseSpec(sigma=5.0, seed=7)
    first = generate_dataset(designs, TRUTH, noise, name="gen")
    second = generate_dataset(designs, TRUTH, noise, name="gen")

    assert len(first) == len(designs)
    assert [e.id for e in first.experiments] == [str(i + 1) for i in range(len(designs))]
    np.testing.assert_array_equal(first.targets, second.targets)

    residuals = first.targets - np.array([impact_distance(TRUTH, d) for d in designs])
    assert np.all(np.abs(residuals) < 5.0 * 6)
    assert np.any(residuals != 0.0)

    try:
        generate_dataset([], TRUTH, noise)
    except ValueError:
        pass
    else:
        raise AssertionError("空の実験条件が受け付けられました")
    print("✓ generate_dataset の決定性")


def test_builtin_datasets():
    """組み込みデータセット A/B/C"""
    assert BUILTIN_LABELS == ("A", "B", "C")
    for label, sixth in zip(BUILTIN_LABELS, ("6a", "6b", "6c")):
        ds = builtin_dataset(label.lower())
        assert ds.name == label
        assert len(ds) == 6
        assert [e.id for e in ds.experiments] == ["1", "2", "3", "4", "5", sixth]
        assert ds.inputs.shape == (6, 2)

    c = builtin_dataset("C")
    np.testing.assert_array_equal(c.inputs[-1], [71.0, 85.0])
    assert c.targets[-1] == 43.239

    try:
        builtin_dataset("D")
    except ValueError:
        pass
    else:
        raise AssertionError("不明なラベルが受け付けられました")
    print("✓ 組み込みデータセット")


def test_dataset_validation():
    """空・重複 id・不正値の拒否"""
    row = Experiment(id="1", psi=30.0, v0=50.0, y_obs=100.0)
    for build in (
        lambda: Dataset(name="empty", experiments=()),
        lambda: Dataset(name="dup", experiments=(row, row)),
        lambda: Experiment(id="x", psi=95.0, v0=50.0, y_obs=1.0),
        lambda: Experiment(id="x", psi=30.0, v0=50.0, y_obs=float('inf')),
    ):
        try:
            build()
        except ValueError:
            continue
        raise AssertionError("不正なデータが受け付けられました")
    print("✓ データセットの検証")


def test_csv_round_trip():
    """CSV の保存と読み込みで値が完全に一致"""
    ds = generate_dataset(list(reference_designs().values()), TRUTH, NoiseSpec(sigma=5.0, seed=11), name="rt")
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "rt.csv"
        save_dataset(ds, str(path))
        header = path.read_text(encoding='utf-8').splitlines()[0]
        assert header == "id,psi_deg,v0_mps,y_m"

        loaded = load_dataset(str(path))
        assert loaded.name == "rt"
        assert loaded.experiments == ds.experiments
    print("✓ データセット CSV の保存と読み込み")


def _expect_format_error(content: str, fragment: str):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "bad.csv"
        path.write_text(content, encoding='utf-8')
        try:
            load_dataset(str(path))
        except DatasetFormatError as e:
            assert fragment in str(e), f"メッセージに {fragment!r} がありません: {e}"
            return
    raise AssertionError(f"DatasetFormatError になりませんでした: {content!r}")


def test_csv_format_errors():
    """形式不正の CSV は行番号付きで拒否"""
    header = "id,psi_deg,v0_mps,y_m\n"
    _expect_format_error(header + "1,30,50,100\n2,abc,50,100\n", "3 行目")
    _expect_format_error(header + "1,30,50,100\n1,40,60,120\n", "3 行目")
    _expect_format_error(header + "1,30,50\n", "2 行目")
    _expect_format_error("id,psi,v0,y\n1,30,50,100\n", "ヘッダー")
    _expect_format_error(header, "データ行")
    _expect_format_error(header + "1,95,50,100\n", "2 行目")
    print("✓ CSV 形式エラー")


def test_load_designs():
    """実験条件 CSV の読み込み"""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "designs.csv"
        path.write_text("psi_deg,v0_mps\n25,60\n45,90\n", encoding='utf-8')
        assert load_designs(str(path)) == [(25.0, 60.0), (45.0, 90.0)]
    print("✓ 実験条件 CSV")


TESTS = [
    ("ノイズテスト", test_noise_determinism),
    ("無ノイズ観測テスト", test_observe_without_noise),
    ("観測誤差分布テスト", test_observe_noise_distribution),
    ("データ生成テスト", test_generate_dataset),
    ("組み込みデータテスト", test_builtin_datasets),
    ("データ検証テスト", test_dataset_validation),
    ("CSV 入出力テスト", test_csv_round_trip),
    ("CSV 形式エラーテスト", test_csv_format_errors),
    ("実験条件 CSV テスト", test_load_designs),
]


def main():
    """メインテスト関数"""
    print("Hybrid Calibrator データテスト")
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
