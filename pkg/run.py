#!/usr/bin/env python
"""
Noncommutative CZ Lab - Command Line Entry Point
命令列入口點

Usage:
    python run.py <gen|decompose|transform|verify|report> [options]

Examples:
    python run.py gen --seed 1 --count 2 --levels 3 --matdim 2 --out out/gen
    python run.py decompose --input out/gen/instance_0000_K3.ncf --lambda 1.0 --out out/dec
    python run.py verify --claims reconstruction,cuculescu_invariants --levels 3,4
    python run.py verify --reference --freeze
    python run.py report --input out/report.json
"""

import os
import sys

# 將 src 目錄加入 Python 路徑
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))

from app import main


if __name__ == '__main__':
    sys.exit(main(sys.argv[1:]))
