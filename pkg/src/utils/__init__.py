"""
Utility helpers (工具模組)
"""
