"""
Hybrid Calibrator - メインエントリーポイント
弾道実験データの生成、三種類のモデルのベイズ較正、射撃条件の最適化を行うコマンドラインツール

サブコマンド:
    generate   学習データの生成（組み込みデータセットまたは実験条件 CSV から）
    calibrate  モデルの較正と事後分布の要約
    optimize   期待効用のグリッド探索と真のモデルでの評価
    surface    期待効用曲面のみの出力
    reproduce  3 データセット × 3 モデルの一括実行と順序の検証
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from tqdm import tqdm

from . import __version__
from .core.calibrate import MCMCConfig, posterior_summary, split_half_check
from .core.config import AppConfig, ConfigManager
from .core.data import BUILTIN_LABELS, Dataset, NoiseSpec, builtin_dataset, generate_dataset
from .core.gp import GPFitConfig
from .core.optimize import (
    GridSpec, ObjectiveSurface, RunReport, UtilityConfig, build_report, grid_search,
    model_ordering_holds,
)
from .core.physics import LaunchInput, PhysicsParams, flight_summary
from .core.surrogate import (
    CalibratedSurrogate, SurrogateKind, fit_gp_blackbox, fit_hybrid, fit_simple,
)
from .utils.csv_exporter import load_dataset, load_designs
from .utils.file_manager import FileManager

MODEL_ORDER = (SurrogateKind.SIMPLE, SurrogateKind.BLACKBOX_GP, SurrogateKind.HYBRID)


class ReproductionError(RuntimeError):
    """再現実行で Hybrid > GP > Simple の順序が成り立たない"""


class TqdmProgress:
    """進捗コールバック (current, total, status, label) を tqdm バーに表示"""

    def __init__(self, desc: str, disable: bool = False):
        self.desc = desc
        self.disable = disable
        self.bar: Optional[tqdm] = None

    def __call__(self, current: int, total: int, status: str, label: str):
        if self.bar is None:
            self.bar = tqdm(total=total, desc=self.desc, disable=self.disable, leave=False)
        self.bar.set_postfix_str(f"{status} {label}")
        self.bar.update(1)

    def close(self):
        if self.bar is not None:
            self.bar.close()
            self.bar = None


class HybridCalApp:
    """Hybrid Calibrator アプリケーションクラス"""

    def __init__(self, config: AppConfig, quiet: bool = False):
        self.config = config
        self.quiet = quiet
        self.file_manager: Optional[FileManager] = None
        self.logger = logging.getLogger(__name__)

    def setup_logging(self):
        """ログ設定"""
        level = logging.WARNING if self.quiet else getattr(logging, self.config.log_level.upper())
        handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]

        if self.config.log_to_file:
            log_dir = Path(self.config.output_directory) / "logs"
            log_dir.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(log_dir / "hybridcal.log", encoding='utf-8'))

        logging.basicConfig(
            level=level,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            handlers=handlers,
            force=True,
        )
        self.logger.info(f"Hybrid Calibrator {__version__} 開始 (seed={self.config.seed})")

    def get_file_manager(self) -> FileManager:
        if self.file_manager is None:
            self.file_manager = FileManager(self.config.output_directory)
        return self.file_manager

    # 設定から各モジュールの設定を組み立て
    def physics_params(self) -> PhysicsParams:
        c = self.config
        return PhysicsParams(mass=c.mass_kg, gravity=c.gravity_mps2, drag_coeff=c.drag_coeff_kg_per_m)

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(sigma=self.config.sigma_m, seed=self.config.seed)

    def mcmc_config(self) -> MCMCConfig:
        c = self.config
        return MCMCConfig(
            chains=c.mcmc_chains, burn_in=c.mcmc_burn_in, kept=c.mcmc_kept, seed=c.seed,
            target_accept=c.mcmc_target_accept, max_workers=c.effective_workers(),
        )

    def gp_config(self) -> GPFitConfig:
        c = self.config
        return GPFitConfig(
            restarts=c.gp_restarts, seed=c.seed, max_iter=c.gp_max_iter, xatol=c.gp_xatol,
            max_workers=c.effective_workers(),
        )

    def grid_spec(self) -> GridSpec:
        c = self.config
        return GridSpec(
            v0_min=c.v0_min, v0_max=c.v0_max, v0_step=c.v0_step,
            psi_min=c.psi_min, psi_max=c.psi_max, psi_step=c.psi_step,
        )

    def utility_config(self) -> UtilityConfig:
        return UtilityConfig(target=self.config.target_m, miss_cap=self.config.miss_cap_m)

    # パイプライン
    def resolve_dataset(self, source: str) -> Dataset:
        """組み込みラベル (A/B/C) または CSV パスからデータセットを取得"""
        if source.strip().upper() in BUILTIN_LABELS:
            return builtin_dataset(source)
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"データセットが見つかりません: {path}")
        return load_dataset(str(path))

    def fit(self, ds: Dataset, kind: SurrogateKind) -> CalibratedSurrogate:
        """指定された種類のモデルを較正"""
        progress = TqdmProgress(f"MCMC {ds.name}", disable=self.quiet)
        try:
            if kind is SurrogateKind.SIMPLE:
                return fit_simple(ds, self.mcmc_config(), progress_callback=progress)
            if kind is SurrogateKind.BLACKBOX_GP:
                return fit_gp_blackbox(ds, self.gp_config())
            return fit_hybrid(ds, self.mcmc_config(), self.gp_config(), progress_callback=progress)
        finally:
            progress.close()

    def obtain_surrogate(self, dataset: str, kind: SurrogateKind, fit: bool,
                         surrogate_dir: Optional[str]) -> CalibratedSurrogate:
        """保存済みモデルを読み込むか、--fit ならその場で較正"""
        if fit:
            surrogate = self.fit(self.resolve_dataset(dataset), kind)
            self.get_file_manager().save_surrogate(surrogate)
            return surrogate

        fm = self.get_file_manager()
        directory = surrogate_dir or str(fm.bundle_directory(self.resolve_dataset(dataset).name, kind))
        surrogate = fm.load_surrogate(directory)
        if surrogate.kind is not kind:
            self.logger.warning(f"保存済みモデルの種類 {surrogate.kind.value} を使用します（指定: {kind.value}）")
        return surrogate

    def search(self, surrogate: CalibratedSurrogate) -> ObjectiveSurface:
        progress = TqdmProgress(f"grid {surrogate.dataset_name}/{surrogate.kind.value}", disable=self.quiet)
        try:
            return grid_search(
                surrogate, self.grid_spec(), self.utility_config(),
                n_samples=self.config.n_samples, nodes=self.config.gh_nodes,
                max_workers=self.config.effective_workers(), progress_callback=progress,
            )
        finally:
            progress.close()

    # コマンド
    def cmd_generate(self, args: argparse.Namespace) -> int:
        """学習データの生成"""
        fm = self.get_file_manager()
        params = self.physics_params()

        if args.builtin:
            ds = builtin_dataset(args.builtin)
        else:
            designs_path = Path(args.designs)
            if not designs_path.exists():
                raise FileNotFoundError(f"実験条件ファイルが見つかりません: {designs_path}")
            designs = [LaunchInput(v0, psi) for psi, v0 in load_designs(str(designs_path))]
            ds = generate_dataset(designs, params, self.noise_spec(), name=args.name or designs_path.stem)

        output = str(Path(args.output).resolve()) if args.output else str(fm.output_directory / f"dataset_{ds.name}.csv")
        fm.csv_exporter.export_dataset(ds, output)
        if args.trajectories:
            fm.csv_exporter.export_trajectories(ds, params)

        print(f"真のモデル: m={params.mass} kg, g={params.gravity} m/s², C_D={params.drag_coeff} kg/m, "
              f"sigma={self.config.sigma_m} m, seed={self.config.seed}")
        for e in ds.experiments:
            summary = flight_summary(params, e.launch)
            print(f"  {e.id:>3}: psi={e.psi:5.1f}°  v0={e.v0:6.2f} m/s  y_obs={e.y_obs:8.3f} m  "
                  f"(真の着弾距離 {summary.impact_distance:8.3f} m, 飛行時間 {summary.flight_time:6.3f} s)")
        print(f"出力: {output}")
        return 0

    def cmd_calibrate(self, args: argparse.Namespace) -> int:
        """モデルの較正と要約"""
        kind = SurrogateKind.parse(args.model)
        ds = self.resolve_dataset(args.dataset)
        surrogate = self.fit(ds, kind)
        bundle = self.get_file_manager().save_surrogate(surrogate)

        print(f"較正完了: データセット {ds.name} ({len(ds)}件), モデル {kind.display_name}")
        if surrogate.posterior is not None:
            summary = posterior_summary(surrogate.posterior)
            z_scores = split_half_check(surrogate.posterior)
            for name, s in summary.items():
                print(f"  {name:>3}: 平均={s.mean:.4f}  標準偏差={s.sd:.4f}  "
                      f"95%区間=[{s.q025:.4f}, {s.q975:.4f}]  前後半 z={z_scores[name]:+.2f}")
            print(f"  採択率: {surrogate.posterior.meta.acceptance_rate:.3f}")
        if surrogate.gp is not None:
            hyper = surrogate.gp.hyper
            print(f"  GP MAP: sigma_f={hyper.signal_std:.4f}, l_v0={hyper.lengthscales[0]:.3f}, "
                  f"l_psi={hyper.lengthscales[1]:.3f}, sigma={hyper.noise_std:.4f}")
        if surrogate.residual_reference_g is not None:
            print(f"  残差の基準 g: {surrogate.residual_reference_g:.4f} m/s²")
        print(f"出力: {bundle}")
        return 0

    def cmd_optimize(self, args: argparse.Namespace) -> int:
        """グリッド探索と真のモデルでの評価"""
        kind = SurrogateKind.parse(args.model)
        surrogate = self.obtain_surrogate(args.dataset, kind, args.fit, args.surrogate)
        surface = self.search(surrogate)

        fm = self.get_file_manager()
        fm.csv_exporter.export_surface(surface, str(fm.surface_path(surrogate.dataset_name, surrogate.kind)))
        report = build_report(surrogate, surface, self.physics_params(), self.noise_spec(), self.config.n_samples)
        output = fm.save_report(report)

        print(format_report_line(report))
        print(f"出力: {output}")
        return 0

    def cmd_surface(self, args: argparse.Namespace) -> int:
        """期待効用曲面のみを出力"""
        kind = SurrogateKind.parse(args.model)
        surrogate = self.obtain_surrogate(args.dataset, kind, args.fit, args.surrogate)
        surface = self.search(surrogate)

        fm = self.get_file_manager()
        output = str(Path(args.output).resolve()) if args.output else str(fm.surface_path(surrogate.dataset_name, surrogate.kind))
        fm.csv_exporter.export_surface(surface, output)
        print(f"最大点: psi={surface.argmax.psi:g}°, v0={surface.argmax.v0:g} m/s, E[u]={surface.max_value:.4f}")
        print(f"出力: {output}")
        return 0

    def cmd_reproduce(self, args: argparse.Namespace) -> int:
        """3 データセット × 3 モデルの一括実行"""
        fm = self.get_file_manager()
        params = self.physics_params()
        noise = self.noise_spec()
        reports: List[RunReport] = []
        ordering: Dict[str, bool] = {}
        experiments: Dict[str, str] = {}

        combinations = [(label, kind) for label in BUILTIN_LABELS for kind in MODEL_ORDER]
        with tqdm(total=len(combinations), desc="reproduce", disable=self.quiet) as bar:
            for label in BUILTIN_LABELS:
                ds = builtin_dataset(label)
                experiments[ds.name] = "+".join(e.id for e in ds.experiments)
                maxima: Dict[SurrogateKind, float] = {}
                for kind in MODEL_ORDER:
                    bar.set_postfix_str(f"{label}/{kind.value}")
                    try:
                        surrogate = self.fit(ds, kind)
                        fm.save_surrogate(surrogate)
                        surface = self.search(surrogate)
                        fm.csv_exporter.export_surface(surface, str(fm.surface_path(ds.name, kind)))
                        report = build_report(surrogate, surface, params, noise, self.config.n_samples)
                    except Exception as e:
                        raise RuntimeError(f"データセット {label}, モデル {kind.value} の実行に失敗しました: {e}") from e
                    fm.save_report(report)
                    reports.append(report)
                    maxima[kind] = report.max_expected_utility
                    bar.update(1)
                ordering[ds.name] = model_ordering_holds(maxima)

        fm.csv_exporter.export_results_table(reports, experiments)
        fm.write_reproduction_summary(reports, ordering)

        for report in reports:
            print(format_report_line(report))

        failed = [name for name, ok in ordering.items() if not ok]
        if failed:
            raise ReproductionError(f"Hybrid > GP > Simple の順序が成り立たないデータセット: {', '.join(failed)}")
        print("全データセットで Hybrid > GP > Simple の順序を確認しました")
        return 0

    def run(self, args: argparse.Namespace) -> int:
        """コマンド実行"""
        commands = {
            'generate': self.cmd_generate,
            'calibrate': self.cmd_calibrate,
            'optimize': self.cmd_optimize,
            'surface': self.cmd_surface,
            'reproduce': self.cmd_reproduce,
        }
        try:
            return commands[args.command](args)
        except KeyboardInterrupt:
            self.logger.info("ユーザーによる中断")
            return 1
        except Exception as e:
            self.logger.error(f"{args.command} の実行中にエラーが発生しました: {e}",
                              exc_info=self.config.log_level.upper() == "DEBUG")
            return 1


def format_report_line(report: RunReport) -> str:
    return (
        f"[{report.dataset}/{SurrogateKind.parse(report.model).display_name}] "
        f"最適 psi={report.argmax_psi_deg:g}°, v0={report.argmax_v0_mps:g} m/s, "
        f"E[u]={report.max_expected_utility:.4f}, 予測距離={report.expected_distance_m:.2f} m, "
        f"観測距離={report.observed_distance_m:.2f} m"
    )


def build_parser() -> argparse.ArgumentParser:
    """コマンドライン引数の定義"""
    # 共通フラグはサブコマンドの前後どちらでも指定できるよう、未指定時は属性を作らない
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--seed', type=int, help="乱数シード（0 以上）")
    common.add_argument('--output-dir', help="出力ディレクトリ")
    common.add_argument('--quiet', action='store_true', help="進捗表示と INFO ログを抑制")
    common.add_argument('--config', help="設定ファイル (JSON)")
    common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help="ログレベル")
    common.add_argument('--sigma-m', '--sigma', dest='sigma_m', type=float, help="観測ノイズの標準偏差 [m]")
    common.add_argument('--workers', type=int, help="並列ワーカー数")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument('--dataset', default='C', help="組み込みラベル (A/B/C) またはデータセット CSV")
    fitting.add_argument('--model', default='hybrid', help="simple / gp / hybrid")
    fitting.add_argument('--chains', type=int, help="MCMC チェーン数")
    fitting.add_argument('--burn-in', type=int, help="MCMC バーンイン数")
    fitting.add_argument('--kept', type=int, help="MCMC 保持サンプル数（チェーンごと）")
    fitting.add_argument('--restarts', type=int, help="GP MAP 推定の初期点数")

    deciding = argparse.ArgumentParser(add_help=False)
    deciding.add_argument('--target-m', type=float, help="目標距離 [m]")
    deciding.add_argument('--miss-cap-m', type=float, help="効用が 0 になる外れ幅 [m]")
    deciding.add_argument('--n-samples', type=int, help="期待値に使う事後サンプル数")
    deciding.add_argument('--gh-nodes', type=int, help="Gauss-Hermite 節点数")
    for name, unit in (('v0-min', 'm/s'), ('v0-max', 'm/s'), ('v0-step', 'm/s'),
                       ('psi-min', '度'), ('psi-max', '度'), ('psi-step', '度')):
        deciding.add_argument(f'--{name}', type=float, help=f"グリッド {name} [{unit}]")

    parser = argparse.ArgumentParser(
        prog='hybridcal',
        description="Hybrid Calibrator - 物理モデルと GP を組み合わせたベイズ較正と射撃条件の最適化",
        parents=[common],
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', required=True)

    generate = sub.add_parser('generate', parents=[common], help="学習データの生成")
    source = generate.add_mutually_exclusive_group(required=True)
    source.add_argument('--builtin', choices=list(BUILTIN_LABELS), type=str.upper, help="組み込みデータセット")
    source.add_argument('--designs', help="実験条件 CSV (psi_deg,v0_mps)")
    generate.add_argument('--name', help="生成データセット名")
    generate.add_argument('--output', help="出力 CSV パス")
    generate.add_argument('--trajectories', action='store_true', help="解析解の軌道 CSV も出力")

    sub.add_parser('calibrate', parents=[common, fitting], help="モデルの較正")

    for name, help_text in (('optimize', "期待効用の最大化と真のモデルでの評価"), ('surface', "期待効用曲面の出力")):
        command = sub.add_parser(name, parents=[common, fitting, deciding], help=help_text)
        command.add_argument('--fit', action='store_true', help="保存済みモデルを使わずその場で較正")
        command.add_argument('--surrogate', help="較正済みモデルのディレクトリ")
        if name == 'surface':
            command.add_argument('--output', help="出力 CSV パス")

    sub.add_parser('reproduce', parents=[common, fitting, deciding], help="3 データセット × 3 モデルの一括実行")
    return parser


def build_config(args: argparse.Namespace) -> AppConfig:
    """設定ファイルとコマンドライン引数から設定を作成"""
    manager = ConfigManager(getattr(args, 'config', None))
    manager.load_config()

    overrides = {
        'seed': getattr(args, 'seed', None),
        'output_directory': getattr(args, 'output_dir', None),
        'log_level': getattr(args, 'log_level', None),
        'sigma_m': getattr(args, 'sigma_m', None),
        'max_workers': getattr(args, 'workers', None),
    }
    for flag, key in (('chains', 'mcmc_chains'), ('burn_in', 'mcmc_burn_in'), ('kept', 'mcmc_kept'),
                      ('restarts', 'gp_restarts'), ('target_m', 'target_m'), ('miss_cap_m', 'miss_cap_m'),
                      ('n_samples', 'n_samples'), ('gh_nodes', 'gh_nodes'),
                      ('v0_min', 'v0_min'), ('v0_max', 'v0_max'), ('v0_step', 'v0_step'),
                      ('psi_min', 'psi_min'), ('psi_max', 'psi_max'), ('psi_step', 'psi_step')):
        overrides[key] = getattr(args, flag, None)

    if not manager.update_config(**overrides):
        raise ValueError("コマンドライン引数による設定が不正です")
    return manager.get_config()


def main(argv: Optional[List[str]] = None) -> int:
    """メイン関数"""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = build_config(args)
    except ValueError as e:
        parser.error(str(e))

    app = HybridCalApp(config, quiet=getattr(args, 'quiet', False))
    app.setup_logging()
    return app.run(args)


if __name__ == "__main__":
    sys.exit(main())
