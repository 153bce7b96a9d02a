"""
Retrieval reports: the JSON summary plus CSV side tables.

JSON is written with sorted keys and no timestamps, so equal runs give
byte-identical files. Histogram bin edges are fixed:

  binarization error |ν_j − sgn(ν_j)|   64 bins over [0, 2]
  normalized proxy weight w·√d/‖w‖     64 bins over [−2, 2], clipped
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import ConfigDict, Field, ValidationError, field_validator

from core.config import HISTOGRAM_BINS
from core.errors import ReportError
from core.models import ProxyHashModel
from core.utils import sgn
from proxies.proxy_set import ProxySet

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BINARIZATION_EDGES = np.linspace(0.0, 2.0, HISTOGRAM_BINS + 1)
WEIGHT_EDGES = np.linspace(-2.0, 2.0, HISTOGRAM_BINS + 1)


class RetrievalReport(ProxyHashModel):
    """Retrieval quality of one embedding, plus the diagnostics that explain it."""
    model_config = ConfigDict(frozen=True)

    kind: str = Field(description="Proxy kind or experiment arm that produced the codes.")
    bits: int = Field(ge=1)
    mean_ap: float = Field(ge=0.0, le=1.0)
    top_n: Optional[int] = None
    precision_at_k: Dict[int, float] = Field(default_factory=dict)
    query_ap: List[float] = Field(default_factory=list)
    queries_without_relevant: int = 0
    classification_accuracy: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    margins: Optional[List[float]] = None
    mean_binarization_error: Optional[float] = None
    binarization_histogram: Optional[List[int]] = None
    weight_histogram: Optional[List[int]] = None
    metrics: Dict[str, float] = Field(default_factory=dict, description="Pipeline-specific extras, e.g. the chosen λ.")

    @field_validator("precision_at_k")
    @classmethod
    def _precision_in_unit_interval(cls, value):
        if any(not 0.0 <= p <= 1.0 for p in value.values()):
            raise ValueError("precision values must lie in [0, 1]")
        return value


class ExperimentReport(ProxyHashModel):
    """Reports of every arm of one experiment, keyed by arm name."""
    model_config = ConfigDict(frozen=True)

    schema_version: int = SCHEMA_VERSION
    experiment: str
    reports: Dict[str, RetrievalReport]
    summary: Dict[str, float] = Field(default_factory=dict)


# -------------------------------------------------------------------------------------------------
# Histograms
# -------------------------------------------------------------------------------------------------

def binarization_errors(nu: np.ndarray) -> np.ndarray:
    """Per-coordinate |ν_j − sgn(ν_j)|."""
    nu = np.asarray(nu, dtype=np.float64)
    return np.abs(nu - sgn(nu))


def mean_binarization_error(nu: np.ndarray) -> float:
    """Mean over samples of ‖ν − sgn(ν)‖²/d."""
    return float(np.mean(binarization_errors(nu) ** 2))


def binarization_histogram(nu: np.ndarray) -> List[int]:
    counts, _ = np.histogram(binarization_errors(nu).ravel(), bins=BINARIZATION_EDGES)
    return counts.astype(int).tolist()


def proxy_weight_histogram(p: ProxySet) -> List[int]:
    """Histogram of the column-normalized proxy weights w·√d/‖w‖."""
    W = p.matrix
    values = W * np.sqrt(p.dim) / np.linalg.norm(W, axis=0, keepdims=True)
    counts, _ = np.histogram(np.clip(values, -2.0, 2.0).ravel(), bins=WEIGHT_EDGES)
    return counts.astype(int).tolist()


# -------------------------------------------------------------------------------------------------
# Writing and reading
# -------------------------------------------------------------------------------------------------

def _as_experiment(report: Union[RetrievalReport, ExperimentReport]) -> ExperimentReport:
    if isinstance(report, ExperimentReport):
        return report
    return ExperimentReport(experiment="retrieve", reports={report.kind: report})


def report_json(report: Union[RetrievalReport, ExperimentReport]) -> str:
    """Canonical JSON text of a report."""
    return json.dumps(_as_experiment(report).model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def report_frames(report: ExperimentReport) -> Dict[str, pd.DataFrame]:
    """Long-format side tables: per-query AP, precision@K and histograms."""
    query_rows, precision_rows, histogram_rows = [], [], []
    for arm, r in sorted(report.reports.items()):
        query_rows += [{"arm": arm, "query": i, "ap": ap} for i, ap in enumerate(r.query_ap)]
        precision_rows += [{"arm": arm, "k": k, "precision": v} for k, v in sorted(r.precision_at_k.items())]
        for name, counts, edges in (("binarization_error", r.binarization_histogram, BINARIZATION_EDGES),
                                    ("proxy_weight", r.weight_histogram, WEIGHT_EDGES)):
            if counts is None:
                continue
            histogram_rows += [{"arm": arm, "histogram": name, "bin_lo": edges[b], "bin_hi": edges[b + 1], "count": c}
                               for b, c in enumerate(counts)]
    return {
        "query_ap": pd.DataFrame(query_rows, columns=["arm", "query", "ap"]),
        "precision": pd.DataFrame(precision_rows, columns=["arm", "k", "precision"]),
        "histograms": pd.DataFrame(histogram_rows, columns=["arm", "histogram", "bin_lo", "bin_hi", "count"]),
    }


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(report: Union[RetrievalReport, ExperimentReport], path: str | Path) -> List[Path]:
    """
    Write `path` (JSON) and `<stem>_query_ap.csv`, `<stem>_precision.csv`,
    `<stem>_histograms.csv` next to it.

    Returns:
        The paths written, JSON first.

    Raises:
        ReportError: when any arm was evaluated on an empty query set, or the
            location is not writable. Nothing is left behind in either case.
    """
    report = _as_experiment(report)
    empty = [arm for arm, r in report.reports.items() if not r.query_ap]
    if empty:
        raise ReportError(f"empty query set for {', '.join(sorted(empty))}; no report written")
    path = Path(path)
    written: List[Path] = []
    try:
        _write_atomic(path, report_json(report))
        written.append(path)
        for name, frame in report_frames(report).items():
            csv_path = path.with_name(f"{path.stem}_{name}.csv")
            _write_atomic(csv_path, frame.to_csv(index=False))
            written.append(csv_path)
    except OSError as exc:
        for done in written:
            done.unlink(missing_ok=True)
        raise ReportError(f"cannot write report to {path}: {exc}") from exc
    logger.info("Report written to %s (%d arms)", path, len(report.reports))
    return written


def read_report(path: str | Path) -> ExperimentReport:
    """Load a report JSON written by `emit_report`."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from exc
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ReportError(f"{path}: unsupported schema version {payload.get('schema_version')}")
    try:
        return ExperimentReport.model_validate(payload)
    except ValidationError as exc:
        raise ReportError(f"{path}: {exc}") from exc
