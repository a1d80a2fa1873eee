"""
CSV Exporter - CSV入出力機能
データセット・事後サンプル・目的関数曲面・結果表の CSV 入出力

書き込みは csv モジュール（浮動小数は repr 精度）、読み込みは pandas で行い、
列数・数値・重複 id を検証します。
"""

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..core.calibrate import PosteriorSamples, SamplerMeta
from ..core.data import Dataset, Experiment
from ..core.optimize import ObjectiveSurface, RunReport
from ..core.physics import PhysicsParams, trajectory_analytic, solve_flight_time

DATASET_HEADER = ['id', 'psi_deg', 'v0_mps', 'y_m']
POSTERIOR_HEADER = ['g_mps2', 'tau_per_m2']
SURFACE_HEADER = ['psi_deg', 'v0_mps', 'expected_utility']
DESIGN_HEADER = ['psi_deg', 'v0_mps']
RESULTS_HEADER = [
    'dataset', 'training_experiments', 'model', 'optimum_psi_deg', 'optimum_v0_mps',
    'max_expected_utility', 'expected_distance_m', 'observed_distance_m', 'seed',
]


class DatasetFormatError(ValueError):
    """CSV の形式不正（メッセージに行番号を含む）"""


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as csvfile:
        writer = csv.writer(csvfile)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return str(path)


def _read_table(path: Path, header: Sequence[str], dtype=None) -> pd.DataFrame:
    """ヘッダーと列数を検証して読み込み"""
    if not path.exists():
        raise FileNotFoundError(f"ファイルが見つかりません: {path}")
    try:
        df = pd.read_csv(path, encoding='utf-8', dtype=dtype, skip_blank_lines=True,
                         float_precision='round_trip')
    except pd.errors.EmptyDataError:
        raise DatasetFormatError(f"{path}: ファイルが空です")
    except pd.errors.ParserError as e:
        raise DatasetFormatError(f"{path}: 列数が不正な行があります ({e})")

    if list(df.columns) != list(header):
        raise DatasetFormatError(f"{path}: ヘッダーが {','.join(header)} ではありません: {','.join(map(str, df.columns))}")
    if df.empty:
        raise DatasetFormatError(f"{path}: データ行がありません")

    # 列が足りない行は pandas では NaN になる
    short = df[df.isna().any(axis=1)]
    if not short.empty:
        row_number = int(short.index[0]) + 2
        raise DatasetFormatError(f"{path}: {row_number} 行目の列数が {len(header)} ではないか、空の値があります")
    return df


def _numeric_column(df: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    values = pd.to_numeric(df[column], errors='coerce')
    bad = values[values.isna() | ~np.isfinite(values.fillna(0.0))]
    if not bad.empty:
        row_number = int(bad.index[0]) + 2
        raise DatasetFormatError(f"{path}: {row_number} 行目の {column} が数値ではありません: {df[column].iloc[bad.index[0]]!r}")
    return values.to_numpy(dtype=float)


class CSVExporter:
    """CSV出力クラス"""

    def __init__(self, output_dir: str):
        """
        初期化

        Args:
            output_dir: 出力ディレクトリ
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.logger = logging.getLogger(__name__)

    def _resolve(self, filename: str) -> Path:
        path = Path(filename)
        return path if path.is_absolute() else self.output_dir / path

    def export_dataset(self, ds: Dataset, filename: Optional[str] = None) -> str:
        """データセットを CSV に出力"""
        path = self._resolve(filename or f"dataset_{ds.name}.csv")
        rows = [(e.id, float(e.psi), float(e.v0), float(e.y_obs)) for e in ds.experiments]
        output = _write_rows(path, DATASET_HEADER, rows)
        self.logger.info(f"データセットCSV出力完了: {output} ({len(ds)}件)")
        return output

    def export_posterior(self, samples: PosteriorSamples, filename: str = "posterior.csv") -> str:
        """事後サンプルを CSV に、メタ情報を JSON サイドカーに出力"""
        path = self._resolve(filename)
        rows = zip(map(float, samples.g_draws), map(float, samples.tau_draws))
        output = _write_rows(path, POSTERIOR_HEADER, rows)

        from .file_manager import write_json
        write_json(path.with_suffix('.meta.json'), samples.meta.to_dict())

        self.logger.info(f"事後サンプルCSV出力完了: {output} ({len(samples)}件)")
        return output

    def export_surface(self, surface: ObjectiveSurface, filename: str) -> str:
        """目的関数曲面を行優先で CSV に出力"""
        path = self._resolve(filename)
        output = _write_rows(path, SURFACE_HEADER, surface.rows())
        self.logger.info(f"曲面CSV出力完了: {output} ({surface.values.size}点)")
        return output

    def export_results_table(self, reports: List[RunReport], experiments: dict,
                             filename: str = "table_results.csv") -> str:
        """9 通りの結果を表形式で出力"""
        path = self._resolve(filename)
        rows = [
            (r.dataset, experiments.get(r.dataset, ''), r.model, r.argmax_psi_deg, r.argmax_v0_mps,
             r.max_expected_utility, r.expected_distance_m, r.observed_distance_m, r.seed)
            for r in reports
        ]
        output = _write_rows(path, RESULTS_HEADER, rows)
        self.logger.info(f"結果表CSV出力完了: {output}")
        return output

    def export_trajectories(self, ds: Dataset, params: PhysicsParams, points: int = 200,
                            filename: Optional[str] = None) -> str:
        """各実験条件の解析解軌道を CSV に出力（外部ツールでの描画用）"""
        path = self._resolve(filename or f"trajectories_{ds.name}.csv")
        rows = []
        for e in ds.experiments:
            launch = e.launch
            times = np.linspace(0.0, solve_flight_time(params, launch), points)
            xz = trajectory_analytic(params, launch, times)
            rows.extend((e.id, float(t), float(x), float(z)) for t, (x, z) in zip(times, xz))
        output = _write_rows(path, ['id', 't_s', 'x_m', 'z_m'], rows)
        self.logger.info(f"軌道CSV出力完了: {output}")
        return output


def save_dataset(ds: Dataset, path: str) -> str:
    """データセットを指定パスに保存"""
    target = Path(path)
    return CSVExporter(str(target.parent)).export_dataset(ds, target.name)


def load_dataset(path: str, name: Optional[str] = None) -> Dataset:
    """
    データセット CSV の読み込み

    Raises:
        DatasetFormatError: 列数・数値・重複 id の不正
    """
    csv_path = Path(path)
    df = _read_table(csv_path, DATASET_HEADER, dtype={'id': str})
    psi = _numeric_column(df, 'psi_deg', csv_path)
    v0 = _numeric_column(df, 'v0_mps', csv_path)
    y = _numeric_column(df, 'y_m', csv_path)

    seen = {}
    experiments = []
    for index, exp_id in enumerate(df['id'].astype(str)):
        row_number = index + 2
        if exp_id in seen:
            raise DatasetFormatError(f"{csv_path}: {row_number} 行目の id {exp_id!r} が {seen[exp_id]} 行目と重複しています")
        seen[exp_id] = row_number
        try:
            experiments.append(Experiment(id=exp_id, psi=float(psi[index]), v0=float(v0[index]), y_obs=float(y[index])))
        except ValueError as e:
            raise DatasetFormatError(f"{csv_path}: {row_number} 行目の値が不正です: {e}")

    return Dataset(name=name or csv_path.stem, experiments=tuple(experiments))


def load_posterior(path: str) -> PosteriorSamples:
    """事後サンプル CSV と JSON サイドカーの読み込み"""
    csv_path = Path(path)
    df = _read_table(csv_path, POSTERIOR_HEADER)
    g = _numeric_column(df, 'g_mps2', csv_path)
    tau = _numeric_column(df, 'tau_per_m2', csv_path)

    from .file_manager import read_json
    meta = SamplerMeta.from_dict(read_json(csv_path.with_suffix('.meta.json')))
    return PosteriorSamples(g, tau, meta)


def load_designs(path: str) -> List[tuple]:
    """実験条件 CSV (psi_deg, v0_mps) の読み込み"""
    csv_path = Path(path)
    df = _read_table(csv_path, DESIGN_HEADER)
    psi = _numeric_column(df, 'psi_deg', csv_path)
    v0 = _numeric_column(df, 'v0_mps', csv_path)
    return [(float(p), float(v)) for p, v in zip(psi, v0)]


def load_surface(path: str) -> pd.DataFrame:
    """曲面 CSV の読み込み（外部解析用）"""
    return _read_table(Path(path), SURFACE_HEADER)


