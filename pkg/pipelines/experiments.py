"""
Experiment entry points: each runs one compiled pipeline graph end to end.
"""

import logging
import uuid
from typing import Any, Dict, List, NamedTuple, Optional

import pandas as pd

from core.config import ExperimentConfig
from core.event_ingestion import empty_event_log
from core.graph import app, transfer_app
from features.dataset import FeatureDataset
from pipelines.state import ExperimentState
from retrieval.reports import ExperimentReport

logger = logging.getLogger(__name__)

_NODES_PER_FOLD = 6


class PipelineResult(NamedTuple):
    report: ExperimentReport
    events: pd.DataFrame
    loss_curves: pd.DataFrame
    diagnostics: Dict[str, Any]


def run_pipeline(experiment: str, data: FeatureDataset, cfg: ExperimentConfig = ExperimentConfig(),
                 arms: Optional[List[str]] = None, workers: Optional[int] = None) -> PipelineResult:
    """
    Run one experiment protocol.

    Args:
        experiment: "ablation", "supervised", "multilabel" or "transfer".
        data: The full dataset; the protocol splits it.
        cfg: Experiment settings.
        arms: Arms to compare; the protocol's default set when None.
        workers: Threads for restarts and query scoring (cfg.workers when None).
    """
    state: ExperimentState = {
        "experiment": experiment,
        "run_id": f"{experiment}-{uuid.uuid4().hex[:12]}",
        "config": cfg,
        "data": data,
        "arms": arms or [],
        "workers": workers or cfg.workers,
        "events": empty_event_log(),
        "loss_curves": None,
    }
    if experiment == "transfer":
        final = transfer_app.invoke(state, config={"recursion_limit": 10 + _NODES_PER_FOLD * cfg.transfer_folds})
    elif experiment in ("ablation", "supervised", "multilabel"):
        final = app.invoke(state)
    else:
        raise ValueError(f"unknown experiment {experiment!r}")
    logger.info("%s finished: %s", experiment, ", ".join(f"{k}={v:.4f}" for k, v in sorted(final["report"].summary.items())))
    return PipelineResult(final["report"], final["events"], final["loss_curves"], final.get("diagnostics") or {})


def run_ablation(data: FeatureDataset, cfg: ExperimentConfig = ExperimentConfig(), workers: Optional[int] = None) -> PipelineResult:
    """Every kind in `cfg.kinds`, proxy loss only, identical seed and data order."""
    return run_pipeline("ablation", data, cfg, workers=workers)


def run_supervised(data: FeatureDataset, cfg: ExperimentConfig = ExperimentConfig(), workers: Optional[int] = None) -> PipelineResult:
    """sHCLM against sHCLM+Triplet; queries disjoint from the database."""
    return run_pipeline("supervised", data, cfg, workers=workers)


def run_multilabel(data: FeatureDataset, cfg: ExperimentConfig = ExperimentConfig(), workers: Optional[int] = None) -> PipelineResult:
    """Tag co-occurrence sHCLM with balanced BCE; λ tuned when `cfg.sweep_lambda`."""
    return run_pipeline("multilabel", data, cfg, workers=workers)


def run_transfer(data: FeatureDataset, cfg: ExperimentConfig = ExperimentConfig(), workers: Optional[int] = None) -> PipelineResult:
    """Class-disjoint folds: retrieval mAP and code-classifier accuracy on unseen classes."""
    return run_pipeline("transfer", data, cfg, workers=workers)
