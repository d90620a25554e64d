"""
Noncommutative CZ Lab - Tests
數值實驗室測試模組 (pytest + hypothesis)
"""
