"""
Evaluation of a trained hashing layer: encode, rank, score, report.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from features.dataset import FeatureDataset
from hashing.layer import HashingLayer, classification_accuracy, embed
from proxies.design import margins
from retrieval.codes import BinaryCodeDatabase, encode_embeddings
from retrieval.metrics import score_queries
from retrieval.reports import (RetrievalReport, binarization_histogram, mean_binarization_error,
                               proxy_weight_histogram)

logger = logging.getLogger(__name__)


def evaluate_codes(queries: BinaryCodeDatabase, db: BinaryCodeDatabase, kind: str, top_n: Optional[int] = None,
                   ks: Sequence[int] = (), query_db_indices: Optional[np.ndarray] = None, workers: int = 1) -> RetrievalReport:
    """mAP, precision@K and the per-query AP list of packed codes."""
    scores = score_queries(queries, db, top_n, ks, query_db_indices, workers)
    missing = int(np.sum(~scores.has_relevant))
    if missing:
        logger.warning("%d of %d queries have no relevant item in the evaluated prefix (AP := 0)",
                       missing, queries.num_codes)
    return RetrievalReport(
        kind=kind,
        bits=db.bits,
        mean_ap=float(scores.ap.mean()),
        top_n=top_n,
        precision_at_k={k: float(v) for k, v in zip(scores.ks, scores.precision.mean(axis=0))},
        query_ap=scores.ap.tolist(),
        queries_without_relevant=missing,
    )


def _codes(nu: np.ndarray, data: FeatureDataset) -> BinaryCodeDatabase:
    return encode_embeddings(nu, labels=data.labels, tags=data.tags)


def evaluate_layer(layer: HashingLayer, queries: FeatureDataset, db: FeatureDataset, kind: str,
                   top_n: Optional[int] = None, ks: Sequence[int] = (), query_db_indices: Optional[np.ndarray] = None,
                   with_accuracy: bool = True, workers: int = 1) -> RetrievalReport:
    """
    Full retrieval report of a layer.

    Queries and database are encoded with the layer; the report adds the
    proxy margins, both histograms, the mean binarization error of the
    database embeddings and, for single-label data, the proxy-classifier
    accuracy on the queries.
    """
    nu_db = embed(layer, db.features)
    nu_q = embed(layer, queries.features)
    report = evaluate_codes(_codes(nu_q, queries), _codes(nu_db, db), kind, top_n, ks, query_db_indices, workers)
    accuracy = None
    if with_accuracy and not queries.is_multilabel and layer.proxies.num_classes == queries.num_classes:
        accuracy = classification_accuracy(layer, queries.features, queries.labels)
    logger.info("%s: mAP %.4f over %d queries", kind, report.mean_ap, queries.num_samples)
    return report.model_copy(update={
        "classification_accuracy": accuracy,
        "margins": margins(layer.proxies).tolist(),
        "mean_binarization_error": mean_binarization_error(nu_db),
        "binarization_histogram": binarization_histogram(nu_db),
        "weight_histogram": proxy_weight_histogram(layer.proxies),
    })
