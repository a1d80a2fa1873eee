"""
Hybrid Calibrator ユーティリティモジュール
"""
