"""
Hybrid Calibrator - ファイル管理機能
出力ディレクトリの構成、較正済みモデル（バンドル）・実行レポートの保存と読み込み
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..core.calibrate import PosteriorSamples
from ..core.gp import load_model, save_model
from ..core.optimize import RunReport
from ..core.surrogate import CalibratedSurrogate, SurrogateKind
from .csv_exporter import CSVExporter, load_posterior

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


class ArtifactError(RuntimeError):
    """保存済み成果物が読めない、または内容が不整合"""


def write_json(path, data: Dict[str, Any]) -> str:
    """キー順を固定して JSON を書き出し（同じ入力なら同じバイト列）"""
    output_path = Path(path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    return str(output_path)


def read_json(path) -> Dict[str, Any]:
    input_path = Path(path)
    if not input_path.exists():
        raise ArtifactError(f"ファイルが見つかりません: {input_path}")
    try:
        with open(input_path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"JSON の読み込みに失敗しました {input_path}: {e}")


def sanitize_name(name: str) -> str:
    """ファイル名に使えない文字を置換"""
    invalid_chars = '<>:"/\\|?* '
    sanitized = name
    for char in invalid_chars:
        sanitized = sanitized.replace(char, '_')
    while '__' in sanitized:
        sanitized = sanitized.replace('__', '_')
    sanitized = sanitized.strip(' ._')
    return sanitized or "unnamed"


class FileManager:
    """出力ディレクトリ管理クラス"""

    def __init__(self, output_directory: str):
        self.output_directory = Path(output_directory).resolve()
        self.output_directory.mkdir(parents=True, exist_ok=True)
        self.csv_exporter = CSVExporter(str(self.output_directory))

        logger.debug(f"FileManager初期化: {self.output_directory}")

    # 出力先
    def bundle_directory(self, dataset_name: str, kind: SurrogateKind) -> Path:
        return self.output_directory / "models" / f"{sanitize_name(dataset_name)}_{kind.value}"

    def surface_path(self, dataset_name: str, kind: SurrogateKind) -> Path:
        return self.output_directory / "surfaces" / f"surface_{sanitize_name(dataset_name)}_{kind.value}.csv"

    def report_path(self, dataset_name: str, kind: SurrogateKind) -> Path:
        return self.output_directory / "reports" / f"report_{sanitize_name(dataset_name)}_{kind.value}.json"

    # 較正済みモデル
    def save_surrogate(self, surrogate: CalibratedSurrogate, directory: Optional[str] = None) -> str:
        """
        較正済みモデルをディレクトリに保存

        manifest.json に種類とファイル名を記録し、事後サンプルは CSV、GP は JSON で保存します。
        """
        bundle_dir = Path(directory).resolve() if directory else self.bundle_directory(surrogate.dataset_name, surrogate.kind)
        bundle_dir.mkdir(parents=True, exist_ok=True)

        manifest: Dict[str, Any] = {
            'version': MANIFEST_VERSION,
            'kind': surrogate.kind.value,
            'dataset_name': surrogate.dataset_name,
            'residual_reference_g': surrogate.residual_reference_g,
            'posterior': None,
            'gp': None,
        }
        if surrogate.posterior is not None:
            self.csv_exporter.export_posterior(surrogate.posterior, str(bundle_dir / "posterior.csv"))
            manifest['posterior'] = "posterior.csv"
        if surrogate.gp is not None:
            save_model(surrogate.gp, str(bundle_dir / "gp.json"))
            manifest['gp'] = "gp.json"

        write_json(bundle_dir / MANIFEST_NAME, manifest)
        logger.info(f"較正済みモデルを保存しました: {bundle_dir} ({surrogate.kind.display_name})")
        return str(bundle_dir)

    @staticmethod
    def load_surrogate(directory: str) -> CalibratedSurrogate:
        """保存済みの較正済みモデルを読み込み"""
        bundle_dir = Path(directory)
        if bundle_dir.is_file():
            bundle_dir = bundle_dir.parent
        manifest = read_json(bundle_dir / MANIFEST_NAME)

        if manifest.get('version') != MANIFEST_VERSION:
            raise ArtifactError(f"未対応のマニフェストバージョンです: {manifest.get('version')!r}")

        try:
            kind = SurrogateKind.parse(str(manifest['kind']))
            posterior: Optional[PosteriorSamples] = None
            if manifest.get('posterior'):
                posterior = load_posterior(str(bundle_dir / manifest['posterior']))
            gp = load_model(str(bundle_dir / manifest['gp'])) if manifest.get('gp') else None
            reference = manifest.get('residual_reference_g')

            return CalibratedSurrogate(
                kind=kind,
                dataset_name=str(manifest['dataset_name']),
                posterior=posterior,
                gp=gp,
                residual_reference_g=None if reference is None else float(reference),
            )
        except ArtifactError:
            raise
        except (KeyError, ValueError, TypeError, OSError) as e:
            raise ArtifactError(f"較正済みモデルの読み込みに失敗しました {bundle_dir}: {e}")

    # 実行レポート
    def save_report(self, report: RunReport, path: Optional[str] = None) -> str:
        kind = SurrogateKind.parse(report.model)
        output = write_json(path or self.report_path(report.dataset, kind), report.to_dict())
        logger.info(f"実行レポートを保存しました: {output}")
        return output

    @staticmethod
    def load_report(path: str) -> RunReport:
        try:
            return RunReport.from_dict(read_json(path))
        except (ValueError, TypeError) as e:
            raise ArtifactError(f"実行レポートの読み込みに失敗しました {path}: {e}")

    def write_reproduction_summary(self, reports: List[RunReport], ordering: Dict[str, bool]) -> str:
        """再現実行のテキストレポート"""
        report_path = self.output_directory / "reproduction_report.txt"

        with open(report_path, 'w', encoding='utf-8') as f:
            f.write("Hybrid Calibrator - 再現実行レポート\n")
            f.write("=" * 50 + "\n\n")
            f.write(f"実行日時: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
            f.write(f"出力ディレクトリ: {self.output_directory}\n\n")

            for dataset in dict.fromkeys(r.dataset for r in reports):
                f.write(f"=== データセット {dataset} ===\n")
                for r in (r for r in reports if r.dataset == dataset):
                    f.write(
                        f"  {SurrogateKind.parse(r.model).display_name:<7} "
                        f"psi={r.argmax_psi_deg:5.1f}°  v0={r.argmax_v0_mps:6.2f} m/s  "
                        f"E[u]={r.max_expected_utility:.4f}  "
                        f"予測距離={r.expected_distance_m:7.2f} m  観測距離={r.observed_distance_m:7.2f} m\n"
                    )
                status = "成立" if ordering.get(dataset) else "不成立"
                f.write(f"  Hybrid > GP > Simple: {status}\n\n")

        logger.info(f"再現レポート作成: {report_path}")
        return str(report_path)
