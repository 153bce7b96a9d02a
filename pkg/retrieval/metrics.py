"""
Retrieval metrics over Hamming rankings: AP, mAP and precision@K.

Relevance follows the payload: same class label, or at least one shared tag.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.errors import DimensionMismatchError
from retrieval.codes import BinaryCodeDatabase, hamming_matrix

_QUERY_CHUNK = 256


def relevance(query_payload: np.ndarray, db_payload: np.ndarray) -> np.ndarray:
    """Relevance of every database item to one query (label or tag rows)."""
    query_payload = np.asarray(query_payload)
    if query_payload.ndim == 0:
        return np.asarray(db_payload) == query_payload
    return (np.asarray(db_payload, dtype=np.int64) @ query_payload.astype(np.int64)) > 0


def average_precision(relevant: Sequence[bool], top_n: Optional[int] = None) -> Tuple[float, bool]:
    """
    Σ_k P(k)Δr(k) over the first `top_n` ranks.

    Recall is normalized by the relevant items inside the evaluated prefix,
    which is the whole list when `top_n` is None.

    Returns:
        (AP, whether the prefix held any relevant item); AP is 0.0 when not.
    """
    rel = np.asarray(relevant, dtype=bool)[:top_n]
    hits = int(rel.sum())
    if hits == 0:
        return 0.0, False
    precision = np.cumsum(rel) / np.arange(1, rel.size + 1)
    return float(np.sum(precision[rel]) / hits), True


class QueryScores(NamedTuple):
    """Per-query results: AP, relevant-in-prefix flag and precision at each K."""
    ap: np.ndarray
    has_relevant: np.ndarray
    precision: np.ndarray
    ks: List[int]


def _check_payloads(queries: BinaryCodeDatabase, db: BinaryCodeDatabase) -> None:
    if queries.bits != db.bits:
        raise DimensionMismatchError(f"query codes have {queries.bits} bits, database codes {db.bits}")
    if queries.payload is None or db.payload is None:
        raise ValueError("queries and database need labels or tags to judge relevance")
    if (queries.tags is None) != (db.tags is None):
        raise ValueError("queries and database must both carry labels or both carry tags")


def _score_chunk(queries: BinaryCodeDatabase, db: BinaryCodeDatabase, lo: int, hi: int, top_n: Optional[int],
                 ks: List[int], query_db_indices: Optional[np.ndarray]):
    distances = hamming_matrix(queries.words[lo:hi], db.words)
    rows = []
    for offset, row in enumerate(distances):
        i = lo + offset
        order = np.argsort(row, kind="stable")
        if query_db_indices is not None and query_db_indices[i] >= 0:
            order = order[order != query_db_indices[i]]
        rel = relevance(queries.payload[i], db.payload)[order]
        ap, has = average_precision(rel, top_n)
        hits = np.cumsum(rel)
        prec = [hits[min(k, rel.size) - 1] / min(k, rel.size) if rel.size else 0.0 for k in ks]
        rows.append((ap, has, prec))
    return rows


def score_queries(queries: BinaryCodeDatabase, db: BinaryCodeDatabase, top_n: Optional[int] = None,
                  ks: Sequence[int] = (), query_db_indices: Optional[np.ndarray] = None, workers: int = 1) -> QueryScores:
    """
    Rank the database for every query and score each ranking.

    Args:
        queries: Query codes with their payload.
        db: Database codes with their payload.
        top_n: AP truncation; the full ranking when None.
        ks: Cut-offs for precision@K; K beyond the ranking is clipped to it.
        query_db_indices: Database index of each query, or -1, to drop
            self-matches when queries are drawn from the database.
        workers: Threads over query chunks; results are merged in order.
    """
    _check_payloads(queries, db)
    if queries.num_codes == 0:
        raise ValueError("query set is empty")
    if db.num_codes == 0:
        raise ValueError("database is empty")
    if query_db_indices is not None:
        query_db_indices = np.asarray(query_db_indices, dtype=np.int64)
        if query_db_indices.shape != (queries.num_codes,):
            raise DimensionMismatchError("query_db_indices needs one entry per query")
    ks = [int(k) for k in ks]
    bounds = [(lo, min(lo + _QUERY_CHUNK, queries.num_codes)) for lo in range(0, queries.num_codes, _QUERY_CHUNK)]

    def task(bound):
        return _score_chunk(queries, db, bound[0], bound[1], top_n, ks, query_db_indices)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(task, bounds))
    else:
        chunks = [task(bound) for bound in bounds]
    rows = [row for chunk in chunks for row in chunk]
    return QueryScores(
        ap=np.array([r[0] for r in rows], dtype=np.float64),
        has_relevant=np.array([r[1] for r in rows], dtype=bool),
        precision=np.array([r[2] for r in rows], dtype=np.float64).reshape(len(rows), len(ks)),
        ks=ks,
    )


def mean_ap(queries: BinaryCodeDatabase, db: BinaryCodeDatabase, top_n: Optional[int] = None,
            query_db_indices: Optional[np.ndarray] = None, workers: int = 1) -> float:
    """Mean of the per-query APs."""
    return float(score_queries(queries, db, top_n, (), query_db_indices, workers).ap.mean())


def precision_at_k(queries: BinaryCodeDatabase, db: BinaryCodeDatabase, ks: Sequence[int],
                   query_db_indices: Optional[np.ndarray] = None, workers: int = 1) -> Dict[int, float]:
    """Mean precision of the top K retrievals for every K in `ks`."""
    scores = score_queries(queries, db, None, ks, query_db_indices, workers)
    return {k: float(v) for k, v in zip(scores.ks, scores.precision.mean(axis=0))}
