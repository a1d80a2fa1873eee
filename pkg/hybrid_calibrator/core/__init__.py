"""
Hybrid Calibrator コアモジュール
"""
