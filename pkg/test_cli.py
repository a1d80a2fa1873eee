"""
Hybrid Calibrator コマンドラインテスト
generate / calibrate / optimize / surface / reproduce の動作確認
"""

import json
import sys
import tempfile
from pathlib import Path

import pandas as pd

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from hybrid_calibrator.main import main as cli_main
from hybrid_calibrator.utils.csv_exporter import load_posterior
from hybrid_calibrator.utils.file_manager import FileManager

QUICK_FIT = ['--chains', '2', '--burn-in', '1000', '--kept', '600', '--restarts', '3']
SMALL_GRID = ['--v0-min', '60', '--v0-max', '80', '--v0-step', '5',
              '--psi-min', '60', '--psi-max', '80', '--psi-step', '5', '--n-samples', '500']


def _run(tmp: str, *args: str) -> int:
    return cli_main(['--quiet', '--output-dir', tmp, *args])


def test_generate_builtin():
    """組み込みデータセットの出力"""
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'generate', '--builtin', 'A') == 0
        df = pd.read_csv(Path(tmp) / "dataset_A.csv", dtype={'id': str})
    assert len(df) == 6
    assert df['id'].tolist() == ["1", "2", "3", "4", "5", "6a"]
    assert df['y_m'].iloc[-1] == 47.305
    print("✓ generate --builtin A")


def test_generate_designs_deterministic():
    """実験条件からの生成は同じフラグで同じファイル"""
    with tempfile.TemporaryDirectory() as tmp:
        designs = Path(tmp) / "designs.csv"
        designs.write_text("psi_deg,v0_mps\n25,60\n45,90\n70,85\n", encoding='utf-8')
        outputs = []
        for name in ("first.csv", "second.csv"):
            target = Path(tmp) / name
            assert _run(tmp, 'generate', '--designs', str(designs), '--sigma-m', '0', '--seed', '7',
                        '--output', str(target), '--trajectories') == 0
            outputs.append(target.read_bytes())
        assert outputs[0] == outputs[1]
        assert (Path(tmp) / "trajectories_designs.csv").exists()

        noisy = Path(tmp) / "noisy.csv"
        assert _run(tmp, 'generate', '--designs', str(designs), '--seed', '7', '--output', str(noisy)) == 0
        assert noisy.read_bytes() != outputs[0]
    print("✓ generate --designs の決定性")


def test_generate_missing_designs():
    """存在しない実験条件ファイルは終了コード 1"""
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'generate', '--designs', str(Path(tmp) / "nope.csv")) == 1
    print("✓ 実験条件ファイルなし")


def test_usage_error():
    """引数の誤りは終了コード 2"""
    with tempfile.TemporaryDirectory() as tmp:
        try:
            _run(tmp, 'generate')
        except SystemExit as e:
            assert e.code == 2
        else:
            raise AssertionError("引数エラーになりませんでした")

        try:
            _run(tmp, 'calibrate', '--chains', '0')
        except SystemExit as e:
            assert e.code == 2
        else:
            raise AssertionError("不正な設定値が受け付けられました")
    print("✓ 引数エラー")


def test_calibrate_simple_dataset_c():
    """データセット C の Simple 較正で g が偏る"""
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, '--seed', '1', 'calibrate', '--dataset', 'C', '--model', 'simple',
                    '--chains', '2', '--burn-in', '1500', '--kept', '1000') == 0
        posterior = load_posterior(str(Path(tmp) / "models" / "C_simple" / "posterior.csv"))
    assert 29.0 <= float(posterior.g_draws.mean()) <= 43.0
    assert posterior.meta.seed == 1
    print(f"✓ calibrate C simple: g 平均 {posterior.g_draws.mean():.3f}")


def test_calibrate_hybrid_artifacts():
    """Hybrid の較正は事後サンプル CSV と GP JSON を出力"""
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'calibrate', '--dataset', 'A', '--model', 'hybrid', *QUICK_FIT) == 0
        bundle = Path(tmp) / "models" / "A_hybrid"
        assert (bundle / "posterior.csv").exists()
        assert (bundle / "posterior.meta.json").exists()
        gp = json.loads((bundle / "gp.json").read_text(encoding='utf-8'))
        hyper = gp['hyper']
        assert 0.01 < hyper['signal_var'] < 1.0
        assert all(1.0 < l < 50.0 for l in hyper['lengthscales'])
    print("✓ calibrate A hybrid")


def test_optimize_and_surface():
    """保存済みモデルでの最適化と曲面出力"""
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'optimize', '--dataset', 'B', '--model', 'gp', *SMALL_GRID) == 1

        assert _run(tmp, 'calibrate', '--dataset', 'B', '--model', 'gp', *QUICK_FIT) == 0
        assert _run(tmp, 'optimize', '--dataset', 'B', '--model', 'gp', *SMALL_GRID) == 0

        fm = FileManager(tmp)
        report_path = Path(tmp) / "reports" / "report_B_gp.json"
        report = fm.load_report(str(report_path))
        assert report.dataset == "B" and report.model == "gp"
        assert 60.0 <= report.argmax_psi_deg <= 80.0
        assert 0.0 <= report.max_expected_utility <= 1.0

        surface = pd.read_csv(Path(tmp) / "surfaces" / "surface_B_gp.csv")
        assert len(surface) == 5 * 5

        custom = Path(tmp) / "only_surface.csv"
        assert _run(tmp, 'surface', '--dataset', 'B', '--model', 'gp', '--output', str(custom), *SMALL_GRID) == 0
        assert pd.read_csv(custom)['expected_utility'].tolist() == surface['expected_utility'].tolist()
    print("✓ optimize / surface")


def test_optimize_fit_deterministic():
    """--fit による一括実行は同じシードで同じレポート"""
    reports = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            assert _run(tmp, '--seed', '5', 'optimize', '--fit', '--dataset', 'A', '--model', 'simple',
                        *QUICK_FIT, *SMALL_GRID) == 0
            reports.append((Path(tmp) / "reports" / "report_A_simple.json").read_bytes())
    assert reports[0] == reports[1]
    print("✓ optimize --fit の決定性")


def test_reproduce():
    """3 データセット × 3 モデルの再現と傾向の確認"""
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, '--seed', '42', 'reproduce') == 0
        table = pd.read_csv(Path(tmp) / "table_results.csv")
        assert (Path(tmp) / "reproduction_report.txt").exists()

    assert len(table) == 9
    for dataset in ("A", "B", "C"):
        rows = table[table['dataset'] == dataset].set_index('model')
        assert rows.loc['hybrid', 'max_expected_utility'] > rows.loc['gp', 'max_expected_utility']
        assert rows.loc['gp', 'max_expected_utility'] > rows.loc['simple', 'max_expected_utility']
        assert rows.loc['simple', 'observed_distance_m'] > 100.0
        assert abs(rows.loc['hybrid', 'observed_distance_m'] - 100.0) <= 33.0

    hybrid_c = table[(table['dataset'] == "C") & (table['model'] == "hybrid")].iloc[0]
    assert abs(hybrid_c['optimum_psi_deg'] - 72.0) <= 1.0
    assert abs(hybrid_c['optimum_v0_mps'] - 72.5) <= 2.5
    print("✓ reproduce: Hybrid > GP > Simple")


TESTS = [
    ("generate 組み込みテスト", test_generate_builtin),
    ("generate 決定性テスト", test_generate_designs_deterministic),
    ("generate ファイルなしテスト", test_generate_missing_designs),
    ("引数エラーテスト", test_usage_error),
    ("calibrate Simple テスト", test_calibrate_simple_dataset_c),
    ("calibrate Hybrid テスト", test_calibrate_hybrid_artifacts),
    ("optimize / surface テスト", test_optimize_and_surface),
    ("optimize 決定性テスト", test_optimize_fit_deterministic),
    ("reproduce テスト", test_reproduce),
]


def main():
    """メインテスト関数"""
    print("Hybrid Calibrator コマンドラインテスト")
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
