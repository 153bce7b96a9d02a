"""
Dataset files.

features  binary: "PFTR", version u32, n u64, D u32, then n x D f32, all
          little-endian; or CSV (one comma-separated row per sample),
          chosen by a `.csv` suffix
labels    text, one 1-based class per line
tags      text, one space-separated 0/1 row per line
split     text, one of train/db/query per line (optional)
"""

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from core.errors import DatasetFormatError
from features.dataset import SPLITS, FeatureDataset

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"PFTR"
FEATURE_VERSION = 1
FEATURE_HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("n", "<u8"), ("D", "<u4")])


# -------------------------------------------------------------------------------------------------
# Features
# -------------------------------------------------------------------------------------------------

def write_features(features: np.ndarray, path: str | Path) -> None:
    features = np.asarray(features, dtype=np.float32)
    path = Path(path)
    if path.suffix.lower() == ".csv":
        pd.DataFrame(features).to_csv(path, header=False, index=False, float_format="%.9g")
        return
    header = np.array([(FEATURE_MAGIC, FEATURE_VERSION, features.shape[0], features.shape[1])], dtype=FEATURE_HEADER)
    with path.open("wb") as handle:
        handle.write(header.tobytes())
        handle.write(features.astype("<f4").tobytes())


def _read_binary_features(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < FEATURE_HEADER.itemsize:
        raise DatasetFormatError(str(path), f"header needs {FEATURE_HEADER.itemsize} bytes", offset=len(raw))
    header = np.frombuffer(raw, dtype=FEATURE_HEADER, count=1)[0]
    if header["magic"] != FEATURE_MAGIC:
        raise DatasetFormatError(str(path), f"bad magic {bytes(header['magic'])!r}", offset=0)
    if header["version"] != FEATURE_VERSION:
        raise DatasetFormatError(str(path), f"unsupported version {int(header['version'])}", offset=4)
    n, D = int(header["n"]), int(header["D"])
    if n < 1 or D < 1:
        raise DatasetFormatError(str(path), f"empty feature matrix n={n}, D={D}", offset=8)
    expected = FEATURE_HEADER.itemsize + 4 * n * D
    if len(raw) < expected:
        raise DatasetFormatError(str(path), f"truncated: {n} x {D} floats need {expected} bytes", offset=len(raw))
    if len(raw) > expected:
        raise DatasetFormatError(str(path), f"{len(raw) - expected} trailing bytes", offset=expected)
    return np.frombuffer(raw, dtype="<f4", count=n * D, offset=FEATURE_HEADER.itemsize).reshape(n, D).astype(np.float32)


def _read_csv_features(path: Path) -> np.ndarray:
    try:
        frame = pd.read_csv(path, header=None, dtype=np.float64)
    except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DatasetFormatError(str(path), f"cannot parse features: {exc}") from exc
    values = frame.to_numpy()
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        raise DatasetFormatError(str(path), f"missing or non-finite value in column {bad[0][1] + 1}", line=int(bad[0][0]) + 1)
    return values.astype(np.float32)


def read_features(path: str | Path) -> np.ndarray:
    """n x D float32 features from a PFTR or CSV file."""
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(str(path), "file not found")
    return _read_csv_features(path) if path.suffix.lower() == ".csv" else _read_binary_features(path)


# -------------------------------------------------------------------------------------------------
# Labels, tags, splits
# -------------------------------------------------------------------------------------------------

def _lines(path: Path) -> List[str]:
    if not path.exists():
        raise DatasetFormatError(str(path), "file not found")
    lines = path.read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return lines


def _check_count(path: Path, found: int, n: Optional[int]) -> None:
    if n is not None and found != n:
        raise DatasetFormatError(str(path), f"{found} rows for {n} feature vectors", line=min(found, n) + 1)


def read_labels(path: str | Path, n: Optional[int] = None, num_classes: Optional[int] = None) -> np.ndarray:
    """0-based labels from a 1-based text file."""
    path = Path(path)
    lines = _lines(path)
    _check_count(path, len(lines), n)
    labels = np.empty(len(lines), dtype=np.int64)
    for i, line in enumerate(lines):
        try:
            value = int(line.strip())
        except ValueError:
            raise DatasetFormatError(str(path), f"not an integer label: {line.strip()!r}", line=i + 1) from None
        if value < 1 or (num_classes is not None and value > num_classes):
            raise DatasetFormatError(str(path), f"label {value} out of range", line=i + 1)
        labels[i] = value - 1
    return labels


def read_tags(path: str | Path, n: Optional[int] = None) -> np.ndarray:
    """n x T 0/1 tag matrix; every row needs at least one tag."""
    path = Path(path)
    lines = _lines(path)
    _check_count(path, len(lines), n)
    rows = []
    for i, line in enumerate(lines):
        fields = line.split()
        if any(field not in ("0", "1") for field in fields):
            raise DatasetFormatError(str(path), "tags must be 0 or 1", line=i + 1)
        if rows and len(fields) != len(rows[0]):
            raise DatasetFormatError(str(path), f"{len(fields)} tags, expected {len(rows[0])}", line=i + 1)
        if "1" not in fields:
            raise DatasetFormatError(str(path), "row carries no tag", line=i + 1)
        rows.append([int(field) for field in fields])
    return np.array(rows, dtype=np.uint8)


def read_split(path: str | Path, n: Optional[int] = None) -> np.ndarray:
    path = Path(path)
    lines = [line.strip() for line in _lines(path)]
    _check_count(path, len(lines), n)
    for i, name in enumerate(lines):
        if name not in SPLITS:
            raise DatasetFormatError(str(path), f"unknown split {name!r}", line=i + 1)
    return np.array(lines, dtype="<U5")


def ingest(features_path: str | Path, labels_path: str | Path | None = None, tags_path: str | Path | None = None,
           split_path: str | Path | None = None, num_classes: Optional[int] = None) -> FeatureDataset:
    """
    Load and validate a dataset.

    Raises:
        DatasetFormatError: on any parse, range or row-count problem, pointing
            at the offending line or byte offset.
    """
    if (labels_path is None) == (tags_path is None):
        raise DatasetFormatError(str(features_path), "exactly one of a labels or a tags file is required")
    features = read_features(features_path)
    n = features.shape[0]
    labels = read_labels(labels_path, n, num_classes) if labels_path is not None else None
    tags = read_tags(tags_path, n) if tags_path is not None else None
    split = read_split(split_path, n) if split_path is not None else None
    logger.info("Ingested %d x %d features from %s", n, features.shape[1], features_path)
    return FeatureDataset(features=features, labels=labels, tags=tags, num_classes=num_classes or 0, split=split)


def export_dataset(data: FeatureDataset, features_path: str | Path, payload_path: str | Path,
                   split_path: str | Path | None = None) -> None:
    """Write features and labels (1-based) or tags, plus the split when asked."""
    write_features(data.features, features_path)
    if data.is_multilabel:
        text = "\n".join(" ".join(str(int(v)) for v in row) for row in data.tags)
    else:
        text = "\n".join(str(int(y) + 1) for y in data.labels)
    Path(payload_path).write_text(text + "\n", encoding="utf-8")
    if split_path is not None and data.split is not None:
        Path(split_path).write_text("\n".join(data.split.tolist()) + "\n", encoding="utf-8")
