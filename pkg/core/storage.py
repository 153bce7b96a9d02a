"""
Binary file formats of proxyhash artifacts (all little-endian).

PHPX  proxies      magic, version u32, C u32, d u32, kind u8, K f64,
                   then the C proxy columns one after another (f64)
PHLY  layer        magic, version u32, D u32, d u32, L (D x d f64 row-major),
                   bias (d f64), then a complete PHPX file
PHSH  hash codes   magic, version u32, n u64, d u32, then n x ⌈d/64⌉ u64 words;
                   the relevance payload goes to a `.labels` / `.tags` sidecar
"""

import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from core.errors import DatasetFormatError
from features.io import read_labels, read_tags
from hashing.layer import HashingLayer
from proxies.proxy_set import ProxySet
from retrieval.codes import BinaryCodeDatabase, num_words

logger = logging.getLogger(__name__)

VERSION = 1
KIND_CODES = ["tammes", "aligned", "hclm", "shclm", "random", "random_binary", "learned"]

PROXY_HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("C", "<u4"), ("d", "<u4"), ("kind", "u1"), ("K", "<f8")])
LAYER_HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("D", "<u4"), ("d", "<u4")])
CODE_HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("n", "<u8"), ("d", "<u4")])


def _header(raw: bytes, dtype: np.dtype, magic: bytes, path: str, offset: int = 0):
    if len(raw) < offset + dtype.itemsize:
        raise DatasetFormatError(path, f"truncated header, need {dtype.itemsize} bytes", offset=len(raw))
    header = np.frombuffer(raw, dtype=dtype, count=1, offset=offset)[0]
    if header["magic"] != magic:
        raise DatasetFormatError(path, f"expected magic {magic!r}, found {bytes(header['magic'])!r}", offset=offset)
    if header["version"] != VERSION:
        raise DatasetFormatError(path, f"unsupported version {int(header['version'])}", offset=offset + 4)
    return header


def _payload(raw: bytes, offset: int, count: int, dtype: str, path: str) -> np.ndarray:
    size = count * np.dtype(dtype).itemsize
    if len(raw) < offset + size:
        raise DatasetFormatError(path, f"truncated: need {offset + size} bytes", offset=len(raw))
    return np.frombuffer(raw, dtype=dtype, count=count, offset=offset)


# -------------------------------------------------------------------------------------------------
# Proxies
# -------------------------------------------------------------------------------------------------

def proxies_to_bytes(p: ProxySet) -> bytes:
    """Columns in class order, so the file carries the assignment implicitly."""
    W = p.matrix
    header = np.array([(b"PHPX", VERSION, p.num_classes, p.dim, KIND_CODES.index(p.kind), p.norm_constant)], dtype=PROXY_HEADER)
    return header.tobytes() + np.ascontiguousarray(W.T).astype("<f8").tobytes()


def proxies_from_bytes(raw: bytes, path: str = "<bytes>", offset: int = 0) -> Tuple[ProxySet, int]:
    """Parse a PHPX block at `offset`; returns the set and the offset after it."""
    header = _header(raw, PROXY_HEADER, b"PHPX", path, offset)
    C, d, kind = int(header["C"]), int(header["d"]), int(header["kind"])
    if kind >= len(KIND_CODES):
        raise DatasetFormatError(path, f"unknown proxy kind code {kind}", offset=offset + 16)
    start = offset + PROXY_HEADER.itemsize
    columns = _payload(raw, start, C * d, "<f8", path).reshape(C, d)
    p = ProxySet(W=columns.T.astype(np.float64), kind=KIND_CODES[kind], norm_constant=float(header["K"]))
    return p, start + 8 * C * d


def save_proxies(p: ProxySet, path: str | Path) -> None:
    Path(path).write_bytes(proxies_to_bytes(p))
    logger.debug("Saved %s proxies C=%d d=%d to %s", p.kind, p.num_classes, p.dim, path)


def load_proxies(path: str | Path) -> ProxySet:
    raw = Path(path).read_bytes()
    p, end = proxies_from_bytes(raw, str(path))
    if end != len(raw):
        raise DatasetFormatError(str(path), f"{len(raw) - end} trailing bytes", offset=end)
    return p


# -------------------------------------------------------------------------------------------------
# Layers
# -------------------------------------------------------------------------------------------------

def save_layer(layer: HashingLayer, path: str | Path) -> None:
    header = np.array([(b"PHLY", VERSION, layer.input_dim, layer.bits)], dtype=LAYER_HEADER)
    Path(path).write_bytes(header.tobytes() + layer.L.astype("<f8").tobytes() + layer.bias.astype("<f8").tobytes()
                           + proxies_to_bytes(layer.proxies))


def load_layer(path: str | Path) -> HashingLayer:
    raw, name = Path(path).read_bytes(), str(path)
    header = _header(raw, LAYER_HEADER, b"PHLY", name)
    D, d = int(header["D"]), int(header["d"])
    offset = LAYER_HEADER.itemsize
    L = _payload(raw, offset, D * d, "<f8", name).reshape(D, d)
    offset += 8 * D * d
    bias = _payload(raw, offset, d, "<f8", name)
    offset += 8 * d
    proxies, end = proxies_from_bytes(raw, name, offset)
    if end != len(raw):
        raise DatasetFormatError(name, f"{len(raw) - end} trailing bytes", offset=end)
    return HashingLayer(L=L.astype(np.float64), bias=bias.astype(np.float64), proxies=proxies)


# -------------------------------------------------------------------------------------------------
# Hash codes
# -------------------------------------------------------------------------------------------------

def _sidecars(path: Path) -> Tuple[Path, Path]:
    return path.with_name(path.name + ".labels"), path.with_name(path.name + ".tags")


def save_codes(db: BinaryCodeDatabase, path: str | Path) -> None:
    """Write the PHSH file and, when present, its payload sidecar."""
    path = Path(path)
    header = np.array([(b"PHSH", VERSION, db.num_codes, db.bits)], dtype=CODE_HEADER)
    path.write_bytes(header.tobytes() + db.words.astype("<u8").tobytes())
    labels_path, tags_path = _sidecars(path)
    if db.labels is not None:
        labels_path.write_text("\n".join(str(int(y) + 1) for y in db.labels) + "\n", encoding="utf-8")
    elif db.tags is not None:
        tags_path.write_text("\n".join(" ".join(str(int(v)) for v in row) for row in db.tags) + "\n", encoding="utf-8")


def load_codes(path: str | Path, labels_path: Optional[str | Path] = None, tags_path: Optional[str | Path] = None) -> BinaryCodeDatabase:
    """Read a PHSH file; the payload comes from explicit paths or the sidecar."""
    path = Path(path)
    raw = path.read_bytes()
    header = _header(raw, CODE_HEADER, b"PHSH", str(path))
    n, d = int(header["n"]), int(header["d"])
    w = num_words(d)
    words = _payload(raw, CODE_HEADER.itemsize, n * w, "<u8", str(path)).reshape(n, w)
    end = CODE_HEADER.itemsize + 8 * n * w
    if end != len(raw):
        raise DatasetFormatError(str(path), f"{len(raw) - end} trailing bytes", offset=end)

    side_labels, side_tags = _sidecars(path)
    if labels_path is None and tags_path is None:
        labels_path = side_labels if side_labels.exists() else None
        tags_path = side_tags if labels_path is None and side_tags.exists() else None
    labels = read_labels(labels_path, n) if labels_path is not None else None
    tags = read_tags(tags_path, n) if tags_path is not None else None
    try:
        return BinaryCodeDatabase(words=words.astype(np.uint64), bits=d, labels=labels, tags=tags)
    except ValueError as exc:
        raise DatasetFormatError(str(path), str(exc)) from exc
