"""Runtime settings read from the environment (optionally a .env file)."""

import logging
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

DEFAULT_SEED = 20230101


@dataclass(frozen=True)
class Settings:
    threads: int = 1
    log_level: str = "INFO"
    output_dir: Path = Path("dta_sa_output")
    seed: int = DEFAULT_SEED


def _int_env(name, default):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"❌ Environment variable {name} must be an integer, got {raw!r}")


def load_settings() -> Settings:
    """Load Environment Variables and build the settings object."""
    # DTA_SA_ENV_FILE points at a .env file; without it python-dotenv searches upwards
    load_dotenv(os.getenv("DTA_SA_ENV_FILE"))

    threads = _int_env("DTA_SA_THREADS", 1)
    if threads < 1:
        raise ValueError(f"❌ DTA_SA_THREADS must be >= 1, got {threads}")

    log_level = os.getenv("DTA_SA_LOG_LEVEL", "INFO").upper()
    if not isinstance(logging.getLevelName(log_level), int):
        raise ValueError(f"❌ Unknown DTA_SA_LOG_LEVEL {log_level!r}")

    return Settings(
        threads=threads,
        log_level=log_level,
        output_dir=Path(os.getenv("DTA_SA_OUTPUT_DIR", "dta_sa_output")),
        seed=_int_env("DTA_SA_SEED", DEFAULT_SEED),
    )
