"""
Hybrid Calibrator 物理モデルテスト
解析解・簡易モデル・RK4 オラクルの整合性確認
"""

import math
import sys
from pathlib import Path

import numpy as np

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from hybrid_calibrator.core.data import REFERENCE_EXPERIMENTS, reference_designs
from hybrid_calibrator.core.physics import (
    LaunchInput, OracleStepLimitError, PhysicsParams, descent_altitude, flight_summary,
    impact_distance, integrate_trajectory_oracle, parabolic_range, peak_height, peak_time,
    simple_range, solve_flight_time, trajectory_analytic,
)

TRUTH = PhysicsParams(mass=1.0, gravity=9.8, drag_coeff=0.01)


def test_launch_validation():
    """射撃条件の範囲チェック"""
    for v0, psi in ((0.0, 45.0), (-1.0, 45.0), (50.0, 0.0), (50.0, 90.5), (50.0, float('nan'))):
        try:
            LaunchInput(v0, psi)
        except ValueError:
            continue
        raise AssertionError(f"不正な射撃条件が受け付けられました: v0={v0}, psi={psi}")

    vertical = LaunchInput(50.0, 90.0)
    assert vertical.is_vertical
    assert impact_distance(TRUTH, vertical) == 0.0
    assert simple_range(9.8, vertical) < 1e-9
    print("✓ 射撃条件の検証と psi=90 の射程 0")


def test_vacuum_equivalence():
    """抵抗 0 では真のモデルと放物線モデルが一致"""
    vacuum = PhysicsParams(mass=1.0, gravity=9.8, drag_coeff=0.0)
    rng = np.random.default_rng(2024)
    for _ in range(100):
        launch = LaunchInput(float(rng.uniform(5.0, 120.0)), float(rng.uniform(1.0, 89.0)))
        truth = impact_distance(vacuum, launch)
        simple = simple_range(9.8, launch)
        assert abs(truth - simple) <= 1e-6 * simple, f"{launch}: {truth} vs {simple}"
    print("✓ 抵抗 0 で impact_distance = simple_range (100 条件)")


def test_vacuum_peak():
    """真空での最高点"""
    vacuum = PhysicsParams(drag_coeff=0.0)
    assert math.isclose(peak_time(vacuum, 19.6), 2.0, rel_tol=1e-12)
    assert math.isclose(peak_height(vacuum, 19.6), 19.6, rel_tol=1e-12)
    assert math.isclose(solve_flight_time(vacuum, LaunchInput(19.6, 90.0)), 4.0, rel_tol=1e-12)
    print("✓ 真空の最高点・飛行時間")


def test_flight_time_root():
    """飛行時間で高度が 0 に戻る"""
    for key, launch in reference_designs().items():
        tf = solve_flight_time(TRUTH, launch)
        tp = peak_time(TRUTH, launch.vz0)
        zp = peak_height(TRUTH, launch.vz0)
        assert tf > tp > 0
        assert abs(descent_altitude(TRUTH, zp, tp, tf)) < 1e-8, key
    print("✓ z(t_f) = 0")


def test_drag_shortens_range():
    """抵抗があると放物線モデルより短い"""
    for launch in reference_designs().values():
        assert impact_distance(TRUTH, launch) < simple_range(9.8, launch)
    print("✓ 抵抗による射程短縮")


def test_reference_reproduction():
    """表の観測値が真のモデルから 3sigma 以内"""
    designs = reference_designs()
    for key, (_, _, y_obs) in REFERENCE_EXPERIMENTS.items():
        y = impact_distance(TRUTH, designs[key])
        tolerance = 12.0 if key in ("1", "2", "3", "4", "5") else 15.0
        assert abs(y - y_obs) <= tolerance, f"実験 {key}: {y:.3f} vs {y_obs}"
        print(f"  - 実験 {key}: 真値 {y:8.3f} m / 表 {y_obs:8.3f} m")
    print("✓ 表の 8 条件を再現")


def test_peak_against_oracle():
    """抵抗ありの最高点が RK4 オラクルと一致 (v0=90, psi=45)"""
    launch = LaunchInput(90.0, 45.0)
    tp = peak_time(TRUTH, launch.vz0)
    zp = peak_height(TRUTH, launch.vz0)
    assert math.isclose(tp, 3.55740, rel_tol=1e-5), tp
    assert math.isclose(zp, 81.78113, rel_tol=1e-6), zp

    trajectory = integrate_trajectory_oracle(TRUTH, launch, dt=1e-3)
    i = int(np.argmax(trajectory.vz <= 0.0))
    t0, t1 = trajectory.t[i - 1], trajectory.t[i]
    vz0, vz1 = trajectory.vz[i - 1], trajectory.vz[i]
    t_cross = t0 + (t1 - t0) * vz0 / (vz0 - vz1)
    assert abs(tp - t_cross) < 1e-5, f"{tp} vs {t_cross}"
    assert abs(zp - float(trajectory.z.max())) < 1e-4, f"{zp} vs {trajectory.z.max()}"
    print(f"✓ 最高点: t_p={tp:.5f} s, z_p={zp:.5f} m")


def test_descent_against_oracle():
    """降下中の高度がオラクルと一致し、単調に減少"""
    launch = LaunchInput(90.0, 45.0)
    tp = peak_time(TRUTH, launch.vz0)
    zp = peak_height(TRUTH, launch.vz0)
    trajectory = integrate_trajectory_oracle(TRUTH, launch, dt=1e-3)

    t = tp + 2.0
    expected = float(np.interp(t, trajectory.t, trajectory.z))
    assert abs(descent_altitude(TRUTH, zp, tp, t) - expected) < 1e-4

    tf = solve_flight_time(TRUTH, launch)
    heights = np.array([descent_altitude(TRUTH, zp, tp, s) for s in np.linspace(tp, tf, 200)[1:]])
    assert np.all(np.diff(heights) < 0)
    print(f"✓ 降下高度: z(t_p+2)={expected:.5f} m")


def test_range_increases_with_speed():
    """角度を固定すると射程は初速について狭義単調増加"""
    speeds = np.arange(40.0, 100.01, 2.5)
    for psi in (10.0, 30.0, 45.0, 72.0, 85.0):
        ranges = np.array([impact_distance(TRUTH, LaunchInput(float(v0), psi)) for v0 in speeds])
        assert np.all(np.diff(ranges) > 0), psi
    print("✓ 射程の初速単調性")


def test_oracle_agreement():
    """解析解と RK4 オラクルの一致"""
    for psi in np.linspace(5.0, 85.0, 4):
        for v0 in np.linspace(40.0, 100.0, 3):
            launch = LaunchInput(float(v0), float(psi))
            trajectory = integrate_trajectory_oracle(TRUTH, launch, dt=1e-3)
            analytic = impact_distance(TRUTH, launch)
            relative = abs(trajectory.terminal.x - analytic) / analytic
            assert relative < 1e-4, f"{launch}: 相対誤差 {relative:.2e}"
            assert trajectory.terminal.z == 0.0
            assert trajectory.vz_sign_changes() == 1
    print("✓ RK4 オラクルとの相対誤差 < 1e-4 (12 条件)")
    # 細かい刻みでの一点確認
    launch = LaunchInput(90.0, 45.0)
    fine = integrate_trajectory_oracle(TRUTH, launch, dt=1e-5)
    relative = abs(fine.terminal.x - impact_distance(TRUTH, launch)) / impact_distance(TRUTH, launch)
    assert relative < 1e-4, f"dt=1e-5: 相対誤差 {relative:.2e}"
    print(f"✓ RK4 オラクル dt=1e-5 (v0=90, psi=45): 相対誤差 {relative:.2e}")


def test_oracle_step_limit():
    """ステップ上限の超過"""
    try:
        integrate_trajectory_oracle(TRUTH, LaunchInput(50.0, 45.0), dt=1e-3, max_steps=10)
    except OracleStepLimitError:
        print("✓ OracleStepLimitError")
        return
    raise AssertionError("ステップ上限でエラーになりませんでした")


def test_trajectory_analytic():
    """解析解の軌道が連続で端点が正しい"""
    launch = LaunchInput(60.0, 25.0)
    summary = flight_summary(TRUTH, launch)
    times = np.linspace(0.0, summary.flight_time, 501)
    xz = trajectory_analytic(TRUTH, launch, times)

    assert xz.shape == (501, 2)
    np.testing.assert_allclose(xz[0], [0.0, 0.0], atol=1e-12)
    assert abs(xz[-1, 0] - summary.impact_distance) < 1e-9
    assert abs(xz[-1, 1]) < 1e-8
    assert np.all(np.diff(xz[:, 0]) > 0)
    assert xz[:, 1].max() <= summary.peak_height + 1e-9

    peak = trajectory_analytic(TRUTH, launch, np.array([summary.peak_time]))
    assert abs(peak[0, 1] - summary.peak_height) < 1e-9
    print("✓ 解析解の軌道")


def test_parabolic_range_broadcast():
    """放物線モデルの配列評価"""
    g = np.array([9.8, 19.6, 35.0])
    values = parabolic_range(g, 50.0, 45.0)
    expected = [simple_range(float(gi), LaunchInput(50.0, 45.0)) for gi in g]
    np.testing.assert_allclose(values, expected, rtol=1e-12)
    # psi について 45 度対称
    assert math.isclose(float(parabolic_range(9.8, 70.0, 30.0)), float(parabolic_range(9.8, 70.0, 60.0)),
                        rel_tol=1e-12)
    print("✓ parabolic_range のブロードキャストと対称性")


TESTS = [
    ("射撃条件テスト", test_launch_validation),
    ("真空一致テスト", test_vacuum_equivalence),
    ("真空最高点テスト", test_vacuum_peak),
    ("飛行時間テスト", test_flight_time_root),
    ("射程短縮テスト", test_drag_shortens_range),
    ("表再現テスト", test_reference_reproduction),
    ("最高点テスト", test_peak_against_oracle),
    ("降下高度テスト", test_descent_against_oracle),
    ("初速単調性テスト", test_range_increases_with_speed),
    ("RK4 一致テスト", test_oracle_agreement),
    ("ステップ上限テスト", test_oracle_step_limit),
    ("解析解軌道テスト", test_trajectory_analytic),
    ("放物線モデルテスト", test_parabolic_range_broadcast),
]


def main():
    """メインテスト関数"""
    print("Hybrid Calibrator 物理モデルテスト")
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
