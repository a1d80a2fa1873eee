"""
Hybrid Calibrator パッケージ
弾道実験のベイズ較正と最適射撃条件の決定ツール
"""

__version__ = "1.0.0"
__author__ = "Hybrid Calibration Team"
__description__ = "物理モデル・GP・ハイブリッドモデルのベイズ較正と確率計画法による意思決定ツール"
