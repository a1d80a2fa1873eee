"""
Physics - 弾道の真のモデルと簡易放物線モデル
二次空気抵抗を含む弾道の解析解、抵抗を無視した放物線モデル、
および検証用の固定刻み RK4 積分器を提供

角度はすべてのインターフェースで度 (deg) を受け付け、内部で一度だけラジアンへ変換します。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import bisect

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# k·v0²/g がこれ未満なら真空の閉形式を使う
VACUUM_THRESHOLD = 1e-10
# 飛行時間ブラケットの倍加上限
MAX_BRACKET_DOUBLINGS = 60
FLIGHT_TIME_XTOL = 1e-12
# ln cosh(s) の漸近形に切り替える境界
_LOG_COSH_SWITCH = 20.0


class FlightTimeError(RuntimeError):
    """着弾時刻のブラケットが見つからない（非物理的なパラメータ）"""


class OracleStepLimitError(RuntimeError):
    """RK4 オラクルのステップ数上限超過"""


@dataclass(frozen=True)
class PhysicsParams:
    """真のモデルの物理定数"""
    mass: float = 1.0          # kg
    gravity: float = 9.8       # m/s²
    drag_coeff: float = 0.01   # kg/m

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass は正である必要があります: {self.mass}")
        if not self.gravity > 0:
            raise ValueError(f"gravity は正である必要があります: {self.gravity}")
        if not self.drag_coeff >= 0:
            raise ValueError(f"drag_coeff は 0 以上である必要があります: {self.drag_coeff}")

    @property
    def drag_per_mass(self) -> float:
        """C_D/m (1/m)"""
        return self.drag_coeff / self.mass

    def is_vacuum(self, speed: float) -> bool:
        """抵抗が無視できる領域か"""
        return self.drag_per_mass * speed * speed / self.gravity < VACUUM_THRESHOLD


@dataclass(frozen=True)
class LaunchInput:
    """射撃条件 x = [v0, psi]（psi は度）"""
    v0: float
    psi: float
    psi_rad: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.v0) and self.v0 > 0):
            raise ValueError(f"v0 は正である必要があります: {self.v0}")
        # psi = 90 は射程 0 の特別扱いとして受け付ける
        if not (math.isfinite(self.psi) and 0.0 < self.psi <= 90.0):
            raise ValueError(f"psi は (0, 90] 度の範囲である必要があります: {self.psi}")
        object.__setattr__(self, 'psi_rad', math.radians(self.psi))

    @property
    def vx0(self) -> float:
        return self.v0 * math.cos(self.psi_rad)

    @property
    def vz0(self) -> float:
        return self.v0 * math.sin(self.psi_rad)

    @property
    def is_vertical(self) -> bool:
        return self.psi == 90.0


@dataclass(frozen=True)
class TrajectoryState:
    """軌道上の一状態"""
    t: float
    x: float
    z: float
    vx: float
    vz: float


@dataclass
class Trajectory:
    """RK4 オラクルの出力（列指向で保持し、要素アクセスで TrajectoryState を返す）"""
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    vx: np.ndarray
    vz: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, index: int) -> TrajectoryState:
        return TrajectoryState(
            t=float(self.t[index]),
            x=float(self.x[index]),
            z=float(self.z[index]),
            vx=float(self.vx[index]),
            vz=float(self.vz[index]),
        )

    @property
    def terminal(self) -> TrajectoryState:
        """着弾状態（z = 0 の交差点）"""
        return self[-1]

    def vz_sign_changes(self) -> int:
        """vz の符号変化回数"""
        signs = np.sign(self.vz)
        signs = signs[signs != 0]
        return int(np.count_nonzero(np.diff(signs)))


@dataclass(frozen=True)
class FlightSummary:
    """一回の射撃の要約"""
    peak_time: float
    peak_height: float
    flight_time: float
    impact_distance: float


def _log_cosh(s: float) -> float:
    """ln cosh(s)（小さい s でも桁落ちしない形）"""
    s = abs(s)
    if s > _LOG_COSH_SWITCH:
        return s + math.log1p(math.exp(-2.0 * s)) - math.log(2.0)
    half_sinh = math.sinh(0.5 * s)
    return math.log1p(2.0 * half_sinh * half_sinh)


def peak_time(params: PhysicsParams, vz0: float) -> float:
    """最高点到達時刻 t_p"""
    if vz0 <= 0:
        return 0.0
    if params.is_vacuum(vz0):
        return vz0 / params.gravity

    k = params.drag_per_mass
    g = params.gravity
    return math.atan(vz0 * math.sqrt(k / g)) / math.sqrt(k * g)


def peak_height(params: PhysicsParams, vz0: float) -> float:
    """最高点の高さ z(t_p)"""
    if vz0 <= 0:
        return 0.0
    g = params.gravity
    if params.is_vacuum(vz0):
        return vz0 * vz0 / (2.0 * g)

    # -(1/k)·ln cos(arctan(a)) = (1/2k)·ln(1 + a²)
    k = params.drag_per_mass
    return math.log1p(k * vz0 * vz0 / g) / (2.0 * k)


def descent_altitude(params: PhysicsParams, z_peak: float, t_peak: float, t: float) -> float:
    """下降区間 t >= t_p の高度 z(t)"""
    dt = t - t_peak
    g = params.gravity
    k = params.drag_per_mass
    if k == 0.0:
        return z_peak - 0.5 * g * dt * dt

    return z_peak - _log_cosh(math.sqrt(k * g) * dt) / k


def ascent_altitude(params: PhysicsParams, vz0: float, t: float) -> float:
    """上昇区間 0 <= t <= t_p の高度 z(t)"""
    g = params.gravity
    if params.is_vacuum(vz0):
        return vz0 * t - 0.5 * g * t * t

    k = params.drag_per_mass
    omega = math.sqrt(k * g)
    tp = peak_time(params, vz0)
    return (math.log(math.cos(omega * (tp - t))) - math.log(math.cos(omega * tp))) / k


def horizontal_distance(params: PhysicsParams, vx0: float, t: float) -> float:
    """x(t) = (m/C_D)·ln(1 + (C_D/m)·vx0·t)"""
    k = params.drag_per_mass
    if k == 0.0:
        return vx0 * t
    return math.log1p(k * vx0 * t) / k


def solve_flight_time(params: PhysicsParams, launch: LaunchInput) -> float:
    """z(t_f) = 0 を解いて飛行時間 t_f を求める"""
    vz0 = launch.vz0
    g = params.gravity
    if params.is_vacuum(launch.v0):
        return 2.0 * vz0 / g

    tp = peak_time(params, vz0)
    zp = peak_height(params, vz0)

    def altitude(t: float) -> float:
        return descent_altitude(params, zp, tp, t)

    upper = tp + 2.0 * vz0 / g + 1.0
    doublings = 0
    while altitude(upper) > 0.0:
        if doublings >= MAX_BRACKET_DOUBLINGS:
            raise FlightTimeError(
                f"着弾時刻のブラケットが見つかりません: {launch}, {params}"
            )
        upper *= 2.0
        doublings += 1

    if altitude(upper) == 0.0:
        return upper

    return bisect(altitude, tp, upper, xtol=FLIGHT_TIME_XTOL, maxiter=200)


def impact_distance(params: PhysicsParams, launch: LaunchInput) -> float:
    """真のモデルの着弾距離 ŷ(t_f)"""
    if launch.is_vertical:
        return 0.0
    tf = solve_flight_time(params, launch)
    return horizontal_distance(params, launch.vx0, tf)


def flight_summary(params: PhysicsParams, launch: LaunchInput) -> FlightSummary:
    """最高点・飛行時間・着弾距離をまとめて計算"""
    vz0 = launch.vz0
    return FlightSummary(
        peak_time=peak_time(params, vz0),
        peak_height=peak_height(params, vz0),
        flight_time=solve_flight_time(params, launch),
        impact_distance=impact_distance(params, launch),
    )


def trajectory_analytic(params: PhysicsParams, launch: LaunchInput,
                        times: np.ndarray) -> np.ndarray:
    """
    解析解による軌道 (x, z) の評価

    Args:
        times: 0 <= t <= t_f の時刻列

    Returns:
        np.ndarray: shape (len(times), 2) の [x, z]
    """
    vz0 = launch.vz0
    tp = peak_time(params, vz0)
    zp = peak_height(params, vz0)
    out = np.empty((len(times), 2))
    for i, t in enumerate(np.asarray(times, dtype=float)):
        out[i, 0] = horizontal_distance(params, launch.vx0, t)
        if t <= tp:
            out[i, 1] = ascent_altitude(params, vz0, t)
        else:
            out[i, 1] = descent_altitude(params, zp, tp, t)
    return out


def parabolic_range(g: ArrayLike, v0: ArrayLike, psi_deg: ArrayLike) -> ArrayLike:
    """簡易放物線モデル (2·v0²/g)·sin(psi)·cos(psi)（配列でブロードキャスト可）"""
    psi_rad = np.radians(psi_deg)
    return 2.0 * np.square(v0) / g * np.sin(psi_rad) * np.cos(psi_rad)


def simple_range(g: float, launch: LaunchInput) -> float:
    """簡易物理モデル η(x, g)"""
    if not g > 0:
        raise ValueError(f"g は正である必要があります: {g}")
    return 2.0 * launch.v0 * launch.v0 / g * math.sin(launch.psi_rad) * math.cos(launch.psi_rad)


def integrate_trajectory_oracle(params: PhysicsParams, launch: LaunchInput, dt: float,
                                max_steps: int = 50_000_000) -> Trajectory:
    """
    固定刻み RK4 による検証用積分

    m·dvz/dt = -m·g - C_D·vz·|vz|,  m·dvx/dt = -C_D·vx²
    z が下降中に 0 を横切った区間を三次エルミート補間して終端状態を求めます。
    """
    if not dt > 0:
        raise ValueError(f"dt は正である必要があります: {dt}")

    k = params.drag_per_mass
    g = params.gravity

    def deriv(vx: float, vz: float):
        return -k * vx * vx, -g - k * vz * abs(vz)

    t, x, z = 0.0, 0.0, 0.0
    vx, vz = launch.vx0, launch.vz0
    ts: List[float] = [t]
    xs: List[float] = [x]
    zs: List[float] = [z]
    vxs: List[float] = [vx]
    vzs: List[float] = [vz]

    half = 0.5 * dt
    for _ in range(max_steps):
        ax1, az1 = deriv(vx, vz)
        vx2, vz2 = vx + half * ax1, vz + half * az1
        ax2, az2 = deriv(vx2, vz2)
        vx3, vz3 = vx + half * ax2, vz + half * az2
        ax3, az3 = deriv(vx3, vz3)
        vx4, vz4 = vx + dt * ax3, vz + dt * az3
        ax4, az4 = deriv(vx4, vz4)

        x_new = x + dt / 6.0 * (vx + 2.0 * vx2 + 2.0 * vx3 + vx4)
        z_new = z + dt / 6.0 * (vz + 2.0 * vz2 + 2.0 * vz3 + vz4)
        vx_new = vx + dt / 6.0 * (ax1 + 2.0 * ax2 + 2.0 * ax3 + ax4)
        vz_new = vz + dt / 6.0 * (az1 + 2.0 * az2 + 2.0 * az3 + az4)
        t_new = t + dt

        if z_new <= 0.0 and vz_new < 0.0:
            terminal = _interpolate_crossing(
                (t, x, z, vx, vz), (t_new, x_new, z_new, vx_new, vz_new)
            )
            ts.append(terminal.t)
            xs.append(terminal.x)
            zs.append(0.0)
            vxs.append(terminal.vx)
            vzs.append(terminal.vz)
            break

        t, x, z, vx, vz = t_new, x_new, z_new, vx_new, vz_new
        ts.append(t)
        xs.append(x)
        zs.append(z)
        vxs.append(vx)
        vzs.append(vz)
    else:
        raise OracleStepLimitError(f"RK4 のステップ数が上限 {max_steps} を超えました")

    logger.debug(f"RK4 オラクル完了: {len(ts)} ステップ, x_f={xs[-1]:.6f}")
    return Trajectory(
        t=np.asarray(ts), x=np.asarray(xs), z=np.asarray(zs),
        vx=np.asarray(vxs), vz=np.asarray(vzs),
    )


def _interpolate_crossing(before, after) -> TrajectoryState:
    """最後の一歩の中で z = 0 となる時刻と状態を補間"""
    t0, x0, z0, vx0, vz0 = before
    t1, x1, z1, vx1, vz1 = after
    times = np.array([t0, t1])

    z_spline = CubicHermiteSpline(times, np.array([z0, z1]), np.array([vz0, vz1]))
    x_spline = CubicHermiteSpline(times, np.array([x0, x1]), np.array([vx0, vx1]))

    if z1 == 0.0:
        tc = t1
    else:
        tc = bisect(lambda s: float(z_spline(s)), t0, t1, xtol=1e-15)
    w = (tc - t0) / (t1 - t0)
    return TrajectoryState(
        t=tc,
        x=float(x_spline(tc)),
        z=0.0,
        vx=vx0 + w * (vx1 - vx0),
        vz=vz0 + w * (vz1 - vz0),
    )
