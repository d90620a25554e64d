"""
Noncommutative CZ Lab - Source Package
非交換 Calderón–Zygmund 分解數值實驗室
"""
