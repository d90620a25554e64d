"""
環境設定 (Settings)

Environment-backed defaults for the command line. A ``.env`` file in the
working directory is loaded first; no variable is required.
"""

import os
from dataclasses import dataclass

from dotenv import load_dotenv

from claims import DEFAULT_CEILINGS_FILE, DEFAULT_CLAIMS_FILE
from errors import InvalidConfig

load_dotenv()


@dataclass(frozen=True)
class Settings:
    workers: int = 1
    log_level: str = "INFO"
    claims_file: str = DEFAULT_CLAIMS_FILE
    ceilings_file: str = DEFAULT_CEILINGS_FILE
    output_dir: str = "out"

    @classmethod
    def from_env(cls, environ=None):
        env = os.environ if environ is None else environ
        raw_workers = env.get("NCLAB_WORKERS", "1")
        try:
            workers = int(raw_workers)
        except ValueError:
            raise InvalidConfig(f"NCLAB_WORKERS must be an integer, got {raw_workers!r}")
        if workers < 1:
            raise InvalidConfig(f"NCLAB_WORKERS must be positive, got {workers}")
        return cls(
            workers=workers,
            log_level=env.get("NCLAB_LOG_LEVEL", "INFO").upper(),
            claims_file=env.get("NCLAB_CLAIMS_FILE", DEFAULT_CLAIMS_FILE),
            ceilings_file=env.get("NCLAB_CEILINGS_FILE", DEFAULT_CEILINGS_FILE),
            output_dir=env.get("NCLAB_OUTPUT_DIR", "out"),
        )
