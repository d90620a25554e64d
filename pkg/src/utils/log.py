"""
日誌記錄 (Log History)

A bounded in-memory history of recent log entries, forwarded to the
standard ``logging`` logger ``nclab``.
"""

import logging
import sys
from collections import deque
from datetime import datetime

logger = logging.getLogger("nclab")

# 只保留最近 100 條 (keep the latest 100 entries)
MAX_HISTORY = 100
log_history = deque(maxlen=MAX_HISTORY)

_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "success": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}


def configure(level="INFO"):
    """Attach a stderr handler once and set the threshold."""
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("[%(asctime)s] [%(levelname)s] %(message)s"))
        logger.addHandler(handler)
        logger.propagate = False
    logger.setLevel(level.upper() if isinstance(level, str) else level)


def add_log(level, message, category="system"):
    """
    新增日誌記錄到歷史
    (Add log entry to history)

    Args:
        level: 日誌等級 (debug, info, success, warning, error)
        message: 日誌訊息
        category: 日誌類別 (system, io, czd, transforms, verify)
    """
    entry = {
        "level": level,
        "message": message,
        "category": category,
        "timestamp": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
    }
    log_history.append(entry)
    logger.log(_LEVELS.get(level, logging.INFO), "[%s] %s", category, message)
    return entry


def get_logs(limit=None, category=None):
    """Newest-first entries, optionally filtered by category."""
    entries = [e for e in reversed(log_history) if category is None or e["category"] == category]
    return entries if limit is None else entries[:limit]


def clear_logs():
    log_history.clear()
