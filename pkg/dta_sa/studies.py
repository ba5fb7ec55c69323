"""Primary diagnostic studies: 2x2 tables, continuity correction and logit summaries."""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import logit

from dta_sa.errors import DegenerateStudy, InputError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["id", "tp", "fn", "tn", "fp"]
CORRECTION = 0.5


@dataclass(frozen=True)
class DiagnosticStudy:
    """One 2x2 table.

    Cells are floats so a corrected table holds exact half-integers;
    ``fn_`` avoids shadowing the common ``fn`` callable name.
    """

    id: str
    tp: float
    fn_: float
    tn: float
    fp: float

    def __post_init__(self):
        for name in ("tp", "fn_", "tn", "fp"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InputError(f"❌ Study {self.id!r}: cell {name} must be a non-negative count, got {value}")

    @property
    def cells(self):
        return (self.tp, self.fn_, self.tn, self.fp)

    @property
    def n_diseased(self):
        return self.tp + self.fn_

    @property
    def n_healthy(self):
        return self.tn + self.fp


@dataclass(frozen=True)
class StudySummary:
    y1: float
    y2: float
    s1_sq: float
    s2_sq: float
    id: str = ""

    def __post_init__(self):
        if not (self.s1_sq > 0 and self.s2_sq > 0):
            raise InputError(f"❌ Study {self.id!r}: within-study variances must be positive")
        if not (math.isfinite(self.y1) and math.isfinite(self.y2)):
            raise InputError(f"❌ Study {self.id!r}: logit estimates must be finite")

    @property
    def ln_dor(self):
        return self.y1 + self.y2


class StudyArrays(NamedTuple):
    """Column view of a list of summaries, the shape every likelihood works on."""

    y1: np.ndarray
    y2: np.ndarray
    s1_sq: np.ndarray
    s2_sq: np.ndarray

    @property
    def n(self):
        return len(self.y1)


StudyData = Union[Sequence[StudySummary], StudyArrays]


def continuity_correct(study: DiagnosticStudy) -> DiagnosticStudy:
    """Add 0.5 to all four cells when any cell is zero."""
    # an empty margin is left alone so summarize() can reject it
    if study.n_diseased < 1 or study.n_healthy < 1:
        return study
    if min(study.cells) > 0:
        return study
    return replace(
        study,
        tp=study.tp + CORRECTION,
        fn_=study.fn_ + CORRECTION,
        tn=study.tn + CORRECTION,
        fp=study.fp + CORRECTION,
    )


def summarize(study: DiagnosticStudy) -> StudySummary:
    """Logit sensitivity/specificity with their within-study variances."""
    if study.n_diseased < 1:
        raise DegenerateStudy(f"❌ Study {study.id!r} has no diseased subjects (tp + fn = 0)")
    if study.n_healthy < 1:
        raise DegenerateStudy(f"❌ Study {study.id!r} has no non-diseased subjects (tn + fp = 0)")
    if min(study.cells) <= 0:
        raise DegenerateStudy(f"❌ Study {study.id!r} has a zero cell; apply continuity_correct first")

    return StudySummary(
        y1=float(logit(study.tp / study.n_diseased)),
        y2=float(logit(study.tn / study.n_healthy)),
        s1_sq=1.0 / study.tp + 1.0 / study.fn_,
        s2_sq=1.0 / study.tn + 1.0 / study.fp,
        id=study.id,
    )


def summarize_all(studies: Sequence[DiagnosticStudy]) -> list:
    summaries = [summarize(continuity_correct(s)) for s in studies]
    n_corrected = sum(1 for s in studies if min(s.cells) == 0)
    if n_corrected:
        logger.info(f"✅ Continuity correction applied to {n_corrected} of {len(studies)} studies")
    return summaries


def as_arrays(data: StudyData) -> StudyArrays:
    if isinstance(data, StudyArrays):
        return data
    if len(data) == 0:
        raise InputError("❌ At least one study is required")
    return StudyArrays(
        y1=np.array([s.y1 for s in data], dtype=float),
        y2=np.array([s.y2 for s in data], dtype=float),
        s1_sq=np.array([s.s1_sq for s in data], dtype=float),
        s2_sq=np.array([s.s2_sq for s in data], dtype=float),
    )


def summaries_frame(summaries: Sequence[StudySummary]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "id": [s.id for s in summaries],
            "y1": [s.y1 for s in summaries],
            "y2": [s.y2 for s in summaries],
            "s1_sq": [s.s1_sq for s in summaries],
            "s2_sq": [s.s2_sq for s in summaries],
        }
    )


def read_studies(csv_path) -> list:
    """Read ``id,tp,fn,tn,fp`` rows into DiagnosticStudy objects.

    Lines starting with ``#`` are comments. Errors name the offending
    data row (1-based, header excluded).
    """
    path = Path(csv_path)
    try:
        df = pd.read_csv(path, comment="#", dtype={"id": str}, skipinitialspace=True, encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"❌ Input file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        logger.error(f"❌ Could not parse {path}: {e}")
        raise InputError(f"❌ Could not parse {path}: {e}")

    df.columns = [str(c).strip() for c in df.columns]
    for column in REQUIRED_COLUMNS:
        if column not in df.columns:
            raise InputError(f"missing column: {column}")

    if df.empty:
        raise InputError(f"❌ {path} contains no studies")

    studies = []
    for row_number, row in enumerate(df[REQUIRED_COLUMNS].itertuples(index=False), start=1):
        counts = []
        for name, raw in zip(REQUIRED_COLUMNS[1:], row[1:]):
            value = pd.to_numeric(raw, errors="coerce")
            if pd.isna(value) or not np.isfinite(value) or value < 0 or float(value) != int(value):
                raise InputError(f"❌ Row {row_number}: column {name} must be a non-negative integer, got {raw!r}")
            counts.append(float(value))
        study_id = str(row[0]) if not pd.isna(row[0]) else f"study_{row_number}"
        study = DiagnosticStudy(study_id, *counts)
        if study.n_diseased < 1 or study.n_healthy < 1:
            raise InputError(f"❌ Row {row_number} ({study_id}): each study needs tp + fn >= 1 and tn + fp >= 1")
        studies.append(study)

    logger.info(f"✅ Read {len(studies)} studies from {path}")
    return studies
