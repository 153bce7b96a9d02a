"""
Evaluation protocols: how a dataset is cut into training data, queries and
a retrieval database, and how an experiment arm maps to proxies and loss.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np

from core.config import LAMBDA, TrainConfig
from features.dataset import FeatureDataset, primary_groups, query_split
from proxies.proxy_set import ProxySet
from retrieval.reports import RetrievalReport

TRIPLET_SUFFIX = "+triplet"

DEFAULT_ARMS = {
    "supervised": ["shclm", "shclm+triplet"],
    "multilabel": ["hclm", "shclm", "shclm+triplet"],
    "transfer": ["hclm", "shclm", "triplet", "shclm+triplet"],
}


def arm_settings(arm: str, train_cfg: TrainConfig, lam: Optional[float] = None) -> Tuple[str, TrainConfig]:
    """
    Proxy kind and training config of an experiment arm.

    "<kind>" trains with the proxy loss alone, "<kind>+triplet" with the joint
    loss, and "triplet" with the triplet loss alone (HCLM proxies only fix the
    layer width). "learned" also releases the proxy gradient.
    """
    if arm == "triplet":
        return "hclm", train_cfg.model_copy(update={"objective": "triplet"})
    if arm.endswith(TRIPLET_SUFFIX):
        weight = lam if lam is not None else (train_cfg.lam or LAMBDA)
        return arm[:-len(TRIPLET_SUFFIX)], train_cfg.model_copy(update={"objective": "joint", "lam": float(weight)})
    return arm, train_cfg.model_copy(update={"objective": "proxy", "learn_proxies": arm == "learned"})


def matched_logit_scale(train_cfg: TrainConfig, proxies: ProxySet) -> TrainConfig:
    """
    Scale logits so that logit_scale · K equals d for every proxy kind.

    Binary kinds (K = d) keep the configured scale; unit-norm kinds are
    multiplied by d. A perfectly aligned proxy then scores the same logit
    under every kind, and margins are compared in the same units.
    """
    factor = proxies.dim / proxies.norm_constant
    if factor == 1.0:
        return train_cfg
    return train_cfg.model_copy(update={"logit_scale": train_cfg.logit_scale * factor})


def _rows(split: np.ndarray, name: str) -> np.ndarray:
    return np.flatnonzero(split == name)


def _effective_split(data: FeatureDataset, fraction: float, seed: int) -> np.ndarray:
    if data.split is not None and np.any(data.split == "query"):
        return data.split
    return query_split(primary_groups(data), fraction, np.random.default_rng(seed))


def retrieval_splits(data: FeatureDataset, fraction: float, seed: int) -> Tuple[FeatureDataset, FeatureDataset, FeatureDataset]:
    """
    (training set, queries, database) with queries disjoint from both.

    Uses the recorded split when it has queries, otherwise marks a seeded
    `fraction` of every class as queries. The database is the "db" rows when
    present and the training rows otherwise.
    """
    split = _effective_split(data, fraction, seed)
    train_rows, query_rows, db_rows = _rows(split, "train"), _rows(split, "query"), _rows(split, "db")
    if train_rows.size == 0 or query_rows.size == 0:
        raise ValueError("protocol needs both training rows and query rows")
    train = data.subset(train_rows)
    db = data.subset(db_rows) if db_rows.size else train
    return train, data.subset(query_rows), db


def class_folds(num_classes: int, folds: int, seed: int) -> List[np.ndarray]:
    """Seeded partition of the classes into `folds` disjoint test groups."""
    if num_classes < max(4, folds):
        raise ValueError(f"transfer needs at least {max(4, folds)} classes, got {num_classes}")
    order = np.random.default_rng(seed).permutation(num_classes)
    return [np.sort(group) for group in np.array_split(order, folds)]


def check_disjoint(train_classes: np.ndarray, test_classes: np.ndarray) -> None:
    """Reject class splits whose training and test classes overlap."""
    overlap = np.intersect1d(train_classes, test_classes)
    if overlap.size:
        raise ValueError(f"training and test classes overlap: {(overlap + 1).tolist()}")
    if np.asarray(test_classes).size == 0 or np.asarray(train_classes).size < 2:
        raise ValueError("a transfer split needs test classes and at least two training classes")


def transfer_fold(data: FeatureDataset, folds: List[np.ndarray], k: int, fraction: float,
                  seed: int) -> Tuple[FeatureDataset, FeatureDataset, FeatureDataset]:
    """
    Fold k: train on every class outside fold k, retrieve among fold k.

    Both sides are renumbered from 0. The unseen classes are cut into queries
    and database by the recorded split or a seeded per-class draw.
    """
    test_classes = folds[k]
    train_classes = np.sort(np.concatenate([group for i, group in enumerate(folds) if i != k]))
    check_disjoint(train_classes, test_classes)
    train = data.relabel(train_classes)
    unseen = data.relabel(test_classes)
    split = _effective_split(unseen, fraction, seed + k)
    query_rows = _rows(split, "query")
    db_rows = np.flatnonzero(split != "query")
    return train, unseen.subset(query_rows), unseen.subset(db_rows)


def aggregate_fold_reports(fold_reports: List[Dict[str, RetrievalReport]]) -> Dict[str, RetrievalReport]:
    """
    Average every arm over folds: mAP, precision@K, binarization error and
    extra metrics are fold means, per-query APs are concatenated, histograms
    summed. Each fold's mAP is kept as metric `fold<k>_map`.
    """
    arms = list(fold_reports[0])
    merged: Dict[str, RetrievalReport] = {}
    for arm in arms:
        reports = [fold[arm] for fold in fold_reports]
        metrics = {key: float(np.mean([r.metrics[key] for r in reports])) for key in reports[0].metrics}
        metrics.update({f"fold{k}_map": r.mean_ap for k, r in enumerate(reports)})
        binarization = [r.mean_binarization_error for r in reports if r.mean_binarization_error is not None]
        merged[arm] = RetrievalReport(
            kind=arm,
            bits=reports[0].bits,
            mean_ap=float(np.mean([r.mean_ap for r in reports])),
            top_n=reports[0].top_n,
            precision_at_k={k: float(np.mean([r.precision_at_k[k] for r in reports])) for k in reports[0].precision_at_k},
            query_ap=[ap for r in reports for ap in r.query_ap],
            queries_without_relevant=sum(r.queries_without_relevant for r in reports),
            mean_binarization_error=float(np.mean(binarization)) if binarization else None,
            binarization_histogram=_sum_histograms([r.binarization_histogram for r in reports]),
            weight_histogram=_sum_histograms([r.weight_histogram for r in reports]),
            metrics=metrics,
        )
    return merged


def _sum_histograms(histograms: List[Optional[List[int]]]) -> Optional[List[int]]:
    if any(h is None for h in histograms):
        return None
    return np.sum(np.array(histograms), axis=0).astype(int).tolist()
