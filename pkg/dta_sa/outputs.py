"""Writers for the JSON/CSV artifacts and the run manifest."""

import json
import logging
import math
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

DEFAULT_DIGITS = 6
FULL_DIGITS = 17


def tool_version() -> str:
    try:
        return version("dta-sa")
    except PackageNotFoundError:
        return "0+unknown"


def round_sig(value, digits=DEFAULT_DIGITS):
    """Round a float to ``digits`` significant digits; NaN and infinities become None."""
    if value is None or isinstance(value, bool):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        return None
    return float(f"{value:.{digits}g}")


def _clean(obj, digits):
    if isinstance(obj, dict):
        return {k: _clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, digits) for v in obj]
    if isinstance(obj, (float, int, np.floating, np.integer)) and not isinstance(obj, bool):
        return round_sig(obj, digits)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(obj, path, full_precision=False):
    digits = FULL_DIGITS if full_precision else DEFAULT_DIGITS
    path = Path(path)
    try:
        path.write_text(json.dumps(_clean(obj, digits), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        logger.info(f"✅ Wrote {path}")
    except OSError as e:
        logger.error(f"❌ Failed to write {path}: {e}")
        raise


def write_csv(df: pd.DataFrame, path, full_precision=False):
    digits = FULL_DIGITS if full_precision else DEFAULT_DIGITS
    path = Path(path)
    try:
        df.to_csv(path, index=False, float_format=f"%.{digits}g", lineterminator="\n")
        logger.info(f"✅ Wrote {path} ({len(df)} rows)")
    except OSError as e:
        logger.error(f"❌ Failed to write {path}: {e}")
        raise


@dataclass
class RunManifest:
    command: str
    input_path: str
    output_dir: str
    options: dict = field(default_factory=dict)
    seed: int = None
    version: str = field(default_factory=tool_version)

    def write(self, full_precision=False):
        write_json(
            {
                "command": self.command,
                "input_path": self.input_path,
                "output_dir": self.output_dir,
                "options": self.options,
                "tool_version": self.version,
                "seed": self.seed,
            },
            Path(self.output_dir) / "manifest.json",
            full_precision=full_precision,
        )


def prepare_output_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"❌ Output directory {out} is not writable: {e}")
        raise
    return out
