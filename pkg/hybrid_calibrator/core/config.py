"""
Hybrid Calibrator - 設定管理
パイプライン設定の保存・読み込み・管理
"""

import json
import logging
import os
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, Any, Optional, List

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "HYBRIDCAL_THREADS"


@dataclass
class AppConfig:
    """アプリケーション設定"""

    # 真の物理モデル
    mass_kg: float = 1.0
    gravity_mps2: float = 9.8
    drag_coeff_kg_per_m: float = 0.01

    # 観測ノイズ
    sigma_m: float = 5.0
    seed: int = 42

    # MCMC設定
    mcmc_chains: int = 4
    mcmc_burn_in: int = 2000
    mcmc_kept: int = 1200
    mcmc_target_accept: float = 0.35

    # GP設定
    gp_restarts: int = 16
    gp_max_iter: int = 2000
    gp_xatol: float = 1e-8

    # 意思決定設定
    target_m: float = 100.0
    miss_cap_m: float = 100.0
    gh_nodes: int = 7
    n_samples: int = 4500

    # グリッド設定
    v0_min: float = 40.0
    v0_max: float = 100.0
    v0_step: float = 2.5
    psi_min: float = 1.0
    psi_max: float = 90.0
    psi_step: float = 1.0

    # 実行設定
    max_workers: int = 4
    log_level: str = "INFO"
    log_to_file: bool = True
    output_directory: str = "hybridcal_output"

    @classmethod
    def get_default(cls) -> 'AppConfig':
        """デフォルト設定の取得"""
        return cls()

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AppConfig':
        """辞書から設定オブジェクトを作成"""
        # 未知のキーを除去
        valid_keys = set(cls.__dataclass_fields__.keys())
        filtered_data = {k: v for k, v in data.items() if k in valid_keys}

        return cls(**filtered_data)

    def validate(self) -> List[str]:
        """設定値の検証"""
        errors = []

        # 物理パラメータ
        if self.mass_kg <= 0:
            errors.append("mass_kg は正である必要があります")
        if self.gravity_mps2 <= 0:
            errors.append("gravity_mps2 は正である必要があります")
        if self.drag_coeff_kg_per_m < 0:
            errors.append("drag_coeff_kg_per_m は 0 以上である必要があります")

        # ノイズ・シード
        if self.sigma_m < 0:
            errors.append("sigma_m は 0 以上である必要があります")
        if self.seed < 0:
            errors.append("seed は 0 以上の整数である必要があります")

        # MCMC
        if self.mcmc_chains < 1:
            errors.append("mcmc_chains は 1 以上である必要があります")
        if self.mcmc_burn_in < 0:
            errors.append("mcmc_burn_in は 0 以上である必要があります")
        if self.mcmc_kept < 1:
            errors.append("mcmc_kept は 1 以上である必要があります")
        if not 0.0 < self.mcmc_target_accept < 1.0:
            errors.append("mcmc_target_accept は 0.0 から 1.0 の間である必要があります")

        # GP
        if self.gp_restarts < 1:
            errors.append("gp_restarts は 1 以上である必要があります")
        if self.gp_max_iter < 1:
            errors.append("gp_max_iter は 1 以上である必要があります")
        if self.gp_xatol <= 0:
            errors.append("gp_xatol は正である必要があります")

        # 意思決定
        if self.target_m <= 0 or self.miss_cap_m <= 0:
            errors.append("target_m と miss_cap_m は正である必要があります")
        if self.gh_nodes < 1:
            errors.append("gh_nodes は 1 以上である必要があります")
        if self.n_samples < 1:
            errors.append("n_samples は 1 以上である必要があります")

        # グリッド
        if not (self.v0_min < self.v0_max and self.v0_step > 0):
            errors.append("v0 グリッドの範囲または刻みが不正です")
        if not (self.psi_min < self.psi_max and self.psi_step > 0):
            errors.append("psi グリッドの範囲または刻みが不正です")
        if self.v0_min <= 0 or self.psi_min <= 0 or self.psi_max > 90:
            errors.append("グリッドは v0 > 0, 0 < psi <= 90 の範囲である必要があります")

        # 実行
        if self.max_workers < 1:
            errors.append("max_workers は 1 以上である必要があります")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            errors.append("log_level は DEBUG/INFO/WARNING/ERROR のいずれかである必要があります")

        return errors

    def effective_workers(self) -> int:
        """環境変数による上限を反映したワーカー数"""
        raw = os.environ.get(THREADS_ENV_VAR)
        if not raw:
            return self.max_workers

        try:
            cap = int(raw)
        except ValueError:
            logger.warning(f"{THREADS_ENV_VAR} が整数ではありません: {raw!r}")
            return self.max_workers

        if cap < 1:
            logger.warning(f"{THREADS_ENV_VAR} は 1 以上である必要があります: {cap}")
            return self.max_workers

        return min(self.max_workers, cap)


class ConfigManager:
    """設定管理クラス"""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file
        self.config = AppConfig.get_default()

        logger.info(f"ConfigManager初期化: {self.config_file or '(デフォルト設定)'}")

    def load_config(self) -> AppConfig:
        """設定の読み込み"""
        if not self.config_file:
            self.config = AppConfig.get_default()
            return self.config

        try:
            if Path(self.config_file).exists():
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    data = json.load(f)

                self.config = AppConfig.from_dict(data)
                logger.info("設定ファイルを読み込みました")

                # 設定の検証
                errors = self.config.validate()
                if errors:
                    logger.warning("設定検証エラー:")
                    for error in errors:
                        logger.warning(f"  - {error}")
                    logger.warning("デフォルト値を使用します")
                    self.config = AppConfig.get_default()
            else:
                logger.info("設定ファイルが見つかりません。デフォルト設定を使用します")
                self.config = AppConfig.get_default()

        except (OSError, ValueError, TypeError) as e:
            logger.error(f"設定読み込みエラー: {str(e)}")
            logger.info("デフォルト設定を使用します")
            self.config = AppConfig.get_default()

        return self.config

    def save_config(self, path: Optional[str] = None) -> bool:
        """設定の保存"""
        target = path or self.config_file
        if not target:
            logger.error("保存先の設定ファイルが指定されていません")
            return False

        try:
            # 設定の検証
            errors = self.config.validate()
            if errors:
                logger.error("設定保存前の検証エラー:")
                for error in errors:
                    logger.error(f"  - {error}")
                return False

            Path(target).parent.mkdir(parents=True, exist_ok=True)
            with open(target, 'w', encoding='utf-8') as f:
                json.dump(self.config.to_dict(), f, indent=2, ensure_ascii=False)

            logger.info(f"設定を保存しました: {target}")
            return True

        except OSError as e:
            logger.error(f"設定保存エラー: {str(e)}")
            return False

    def update_config(self, **kwargs) -> bool:
        """設定の部分更新（None の値は無視）"""
        updates = {k: v for k, v in kwargs.items() if v is not None}
        if not updates:
            return True

        current_dict = self.config.to_dict()
        current_dict.update(updates)
        candidate = AppConfig.from_dict(current_dict)

        errors = candidate.validate()
        if errors:
            logger.error("設定更新後の検証エラー:")
            for error in errors:
                logger.error(f"  - {error}")
            return False

        self.config = candidate
        logger.info(f"設定を更新しました: {sorted(updates.keys())}")
        return True

    def get_config(self) -> AppConfig:
        """現在の設定を取得"""
        return self.config
