import functools
import logging
from typing import Callable, Dict

import pandas as pd

from core.event_ingestion import empty_event_log, loss_curve_log, stage_event_log
from hashing.code_classifier import train_code_classifier
from hashing.trainer import lambda_sweep, train
from pipelines.protocols import (DEFAULT_ARMS, TRIPLET_SUFFIX, aggregate_fold_reports, arm_settings, class_folds,
                                 matched_logit_scale, retrieval_splits, transfer_fold)
from pipelines.state import ExperimentState
from proxies.catalog import build_proxy_sets
from retrieval.codes import encode
from retrieval.engine import evaluate_layer
from retrieval.reports import ExperimentReport

logger = logging.getLogger(__name__)


def stage(title: str) -> Callable:
    """
    Wraps a node: announces it, and appends its `_metrics` to the event log.

    A node that raises gets a FAILURE event instead; the log up to and
    including it travels on the exception as `events`.
    """
    def wrap(node: Callable[[ExperimentState], Dict]) -> Callable[[ExperimentState], Dict]:
        @functools.wraps(node)
        def run(state: ExperimentState) -> Dict:
            logger.info("--- Running %s Node ---", title)
            events = state.get("events")
            if events is None:
                events = empty_event_log()
            try:
                update = node(state)
            except Exception as exc:
                logger.error("%s failed: %s", title, exc)
                exc.events = stage_event_log(events, state["run_id"], title, error_details=f"{type(exc).__name__}: {exc}")
                raise
            metrics = update.pop("_metrics", {})
            update["events"] = stage_event_log(events, state["run_id"], title, metrics)
            return update
        return run
    return wrap


@stage("Prepare Data")
def prepare_data_node(state: ExperimentState) -> Dict:
    """
    Splits the dataset into training rows, queries and database for the
    ablation, supervised and multi-label protocols.
    """
    cfg, data, experiment = state["config"], state["data"], state["experiment"]
    if experiment == "multilabel" and not data.is_multilabel:
        raise ValueError("the multi-label protocol needs tagged data")
    if experiment != "multilabel" and data.is_multilabel:
        raise ValueError(f"the {experiment} protocol needs single-label data")

    train_data, query_data, db_data = retrieval_splits(data, cfg.query_fraction, cfg.seed)
    arms = state.get("arms") or (list(cfg.kinds) if experiment == "ablation" else DEFAULT_ARMS[experiment])
    return {"train_data": train_data, "query_data": query_data, "db_data": db_data, "query_db_indices": None,
            "arms": arms, "lam": cfg.train.lam,
            "_metrics": {"train": train_data.num_samples, "queries": query_data.num_samples, "db": db_data.num_samples}}


@stage("Prepare Folds")
def prepare_folds_node(state: ExperimentState) -> Dict:
    """
    Partitions the classes into the disjoint test groups of the transfer protocol.
    """
    cfg, data = state["config"], state["data"]
    if data.is_multilabel:
        raise ValueError("the transfer protocol needs single-label data")
    folds = class_folds(data.num_classes, cfg.transfer_folds, cfg.seed)
    return {"folds": folds, "fold": 0, "fold_reports": [], "arms": state.get("arms") or DEFAULT_ARMS["transfer"],
            "lam": cfg.train.lam, "query_db_indices": None,
            "_metrics": {"folds": len(folds), "classes": data.num_classes}}


@stage("Select Fold")
def select_fold_node(state: ExperimentState) -> Dict:
    cfg, k = state["config"], state["fold"]
    train_data, query_data, db_data = transfer_fold(state["data"], state["folds"], k, cfg.query_fraction, cfg.seed)
    return {"train_data": train_data, "query_data": query_data, "db_data": db_data,
            "_metrics": {"fold": k, "test_classes": (state["folds"][k] + 1).tolist()}}


@stage("Design Proxies")
def design_proxies_node(state: ExperimentState) -> Dict:
    """
    Builds every proxy kind the arms need from the training classes.
    """
    cfg, train_data = state["config"], state["train_data"]
    kinds = [arm_settings(arm, cfg.train)[0] for arm in state["arms"]]
    similarity = "cooccur" if train_data.is_multilabel else None
    proxies, diagnostics = build_proxy_sets(kinds, train_data, cfg, similarity, state.get("workers", 1))
    metrics = {}
    if "tammes_min_squared_distance" in diagnostics:
        metrics["tammes_min_squared_distance"] = diagnostics["tammes_min_squared_distance"]
    if "assignment_objective" in diagnostics:
        metrics["assignment_objective_initial"], metrics["assignment_objective_final"] = diagnostics["assignment_objective"]
    return {"proxies": proxies, "diagnostics": diagnostics, "_metrics": metrics}


@stage("Tune Lambda")
def tune_lambda_node(state: ExperimentState) -> Dict:
    """
    Picks λ for the joint arms on a validation split of the training data.
    """
    cfg = state["config"]
    joint = [arm for arm in state["arms"] if arm.endswith(TRIPLET_SUFFIX)]
    kind = arm_settings(joint[0], cfg.train)[0] if joint else "shclm"
    best, scores = lambda_sweep(state["train_data"], state["proxies"][kind], cfg.train, cfg.lambda_grid,
                                cfg.query_fraction, cfg.top_n)
    return {"lam": best, "lambda_scores": scores, "_metrics": {"lambda": best}}


@stage("Train")
def train_node(state: ExperimentState) -> Dict:
    """
    Trains one hashing layer per arm; every arm shares seed and data order.
    """
    cfg = state["config"]
    layers = {}
    for arm in state["arms"]:
        kind, train_cfg = arm_settings(arm, cfg.train, state.get("lam"))
        proxies = state["proxies"][kind]
        layers[arm] = train(state["train_data"], proxies, matched_logit_scale(train_cfg, proxies))
    fold = state.get("fold") if state["experiment"] == "transfer" else None
    curves = loss_curve_log(layers, fold)
    previous = state.get("loss_curves")
    if previous is not None and not previous.empty:
        curves = pd.concat([previous, curves], ignore_index=True)
    return {"layers": layers, "loss_curves": curves,
            "_metrics": {f"{arm}_final_loss": layer.loss_curve[-1] for arm, layer in layers.items()}}


@stage("Evaluate")
def evaluate_node(state: ExperimentState) -> Dict:
    """
    Encodes queries and database with every layer and scores retrieval.
    Transfer runs also fit a softmax classifier on the unseen-class codes.
    """
    cfg, experiment = state["config"], state["experiment"]
    queries, db = state["query_data"], state["db_data"]
    reports = {}
    for arm, layer in state["layers"].items():
        report = evaluate_layer(layer, queries, db, arm, cfg.top_n, cfg.precision_ks, state.get("query_db_indices"),
                                with_accuracy=experiment != "transfer", workers=state.get("workers", 1))
        metrics = {}
        if arm.endswith(TRIPLET_SUFFIX):
            metrics["lambda"] = arm_settings(arm, cfg.train, state.get("lam"))[1].lam
        if experiment == "transfer":
            db_codes = encode(layer, db.features, labels=db.labels)
            query_codes = encode(layer, queries.features, labels=queries.labels)
            metrics["code_accuracy"] = train_code_classifier(db_codes, eval_codes=query_codes).accuracy
        reports[arm] = report.model_copy(update={"metrics": metrics}) if metrics else report
    return {"reports": reports, "_metrics": {f"{arm}_map": r.mean_ap for arm, r in reports.items()}}


@stage("Collect Fold")
def collect_fold_node(state: ExperimentState) -> Dict:
    return {"fold_reports": state["fold_reports"] + [state["reports"]], "fold": state["fold"] + 1,
            "_metrics": {"fold": state["fold"]}}


@stage("Aggregate Folds")
def aggregate_folds_node(state: ExperimentState) -> Dict:
    reports = aggregate_fold_reports(state["fold_reports"])
    return {"reports": reports, "_metrics": {f"{arm}_map": r.mean_ap for arm, r in reports.items()}}


@stage("Report")
def report_node(state: ExperimentState) -> Dict:
    """
    Assembles the experiment report; only seeded quantities enter it.
    """
    reports = state["reports"]
    summary = {f"{arm}_map": r.mean_ap for arm, r in reports.items()}
    for arm, r in reports.items():
        if "code_accuracy" in r.metrics:
            summary[f"{arm}_code_accuracy"] = r.metrics["code_accuracy"]
    if state.get("lambda_scores"):
        summary["lambda"] = state["lam"]
    diagnostics = state.get("diagnostics") or {}
    if state["experiment"] != "transfer" and "tammes_min_squared_distance" in diagnostics:
        summary["tammes_min_squared_distance"] = diagnostics["tammes_min_squared_distance"]
    report = ExperimentReport(experiment=state["experiment"], reports=reports, summary=summary)
    return {"report": report, "_metrics": {"arms": len(reports)}}


def route_after_design(state: ExperimentState) -> str:
    """Multi-label runs with a λ grid tune before training."""
    if state["experiment"] == "multilabel" and state["config"].sweep_lambda:
        return "tune_lambda"
    return "train"


def route_after_collect(state: ExperimentState) -> str:
    return "select_fold" if state["fold"] < len(state["folds"]) else "aggregate_folds"
