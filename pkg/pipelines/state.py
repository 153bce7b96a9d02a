from typing import Any, Dict, List, Optional, TypedDict

import numpy as np
import pandas as pd

from core.config import ExperimentConfig
from features.dataset import FeatureDataset
from hashing.layer import HashingLayer
from proxies.proxy_set import ProxySet
from retrieval.reports import ExperimentReport, RetrievalReport


class ExperimentState(TypedDict, total=False):
    """
    Represents the state of an experiment pipeline, holding all data passed between nodes.
    """
    # Inputs
    experiment: str
    run_id: str
    config: ExperimentConfig
    data: FeatureDataset
    arms: List[str]
    workers: int

    # Prepared splits (per fold for transfer)
    train_data: FeatureDataset
    query_data: FeatureDataset
    db_data: FeatureDataset
    query_db_indices: Optional[np.ndarray]

    # Proxy design output
    proxies: Dict[str, ProxySet]
    diagnostics: Dict[str, Any]

    # λ sweep output
    lam: float
    lambda_scores: Dict[float, float]

    # Trainer output
    layers: Dict[str, HashingLayer]
    loss_curves: pd.DataFrame

    # Evaluation output
    reports: Dict[str, RetrievalReport]

    # Transfer folds
    folds: List[np.ndarray]
    fold: int
    fold_reports: List[Dict[str, RetrievalReport]]

    # Final output
    report: ExperimentReport
    events: pd.DataFrame
