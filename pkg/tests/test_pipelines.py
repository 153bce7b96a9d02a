'''
Tests for the evaluation protocols and the experiment graphs.
'''

import numpy as np
import pytest

from core.config import AlignConfig, AssignConfig, ExperimentConfig, SynthConfig, TammesConfig, TrainConfig
from core.graph import app, transfer_app
from features.dataset import FeatureDataset
from features.synthetic import synth_generate
from pipelines.experiments import run_ablation, run_multilabel, run_pipeline, run_supervised, run_transfer
from pipelines.protocols import (aggregate_fold_reports, arm_settings, check_disjoint, class_folds, matched_logit_scale,
                                 retrieval_splits, transfer_fold)
from proxies.design import random_binary_proxies, random_proxies
from retrieval.reports import RetrievalReport, report_json


def _config(**overrides):
    settings = dict(bits=4, precision_ks=[1, 5], seed=0,
                    train=TrainConfig(epochs=3, batch_size=16),
                    tammes=TammesConfig(restarts=1, max_iters=300),
                    align=AlignConfig(restarts=1),
                    assign=AssignConfig(restarts=2))
    settings.update(overrides)
    return ExperimentConfig(**settings)


@pytest.fixture
def small():
    return synth_generate(SynthConfig(superclasses=2, classes_per_superclass=2, samples_per_class=30, feature_dim=8,
                                      query_fraction=0.2, seed=0))


@pytest.fixture
def small_tagged():
    return synth_generate(SynthConfig(superclasses=2, classes_per_superclass=2, samples_per_class=30, feature_dim=8,
                                      query_fraction=0.2, multilabel=True, seed=0))

# -------------------------------------------------------------------------------------------------
# Protocols
# -------------------------------------------------------------------------------------------------

def test_arm_settings():
    cfg = TrainConfig(lam=0.5)
    assert arm_settings("hclm", cfg)[1].objective == "proxy"
    kind, joint = arm_settings("shclm+triplet", cfg)
    assert kind == "shclm" and joint.objective == "joint" and joint.lam == 0.5
    assert arm_settings("shclm+triplet", cfg, lam=10.0)[1].lam == 10.0
    assert arm_settings("triplet", cfg)[1].objective == "triplet"
    assert arm_settings("learned", cfg)[1].learn_proxies


def test_logit_scale_matches_across_proxy_kinds():
    cfg = TrainConfig(logit_scale=2.0)
    assert matched_logit_scale(cfg, random_binary_proxies(6, 8)).logit_scale == 2.0
    assert matched_logit_scale(cfg, random_proxies(6, 8)).logit_scale == pytest.approx(16.0)
    assert cfg.logit_scale == 2.0


def test_class_folds_partition_the_classes():
    folds = class_folds(10, 4, seed=3)
    assert len(folds) == 4
    np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(10))
    assert all(np.array_equal(a, b) for a, b in zip(folds, class_folds(10, 4, seed=3)))


def test_class_folds_need_enough_classes():
    with pytest.raises(ValueError):
        class_folds(3, 2, seed=0)


def test_overlapping_class_split_is_rejected():
    with pytest.raises(ValueError, match="overlap"):
        check_disjoint(np.array([0, 1, 2]), np.array([2, 3]))


def test_retrieval_splits_are_disjoint(small):
    train, queries, db = retrieval_splits(small, 0.2, seed=0)
    assert train.num_samples + queries.num_samples == small.num_samples
    assert db is train
    assert queries.num_samples == 4 * 6


def test_retrieval_splits_draw_queries_when_none_are_recorded():
    data = FeatureDataset(features=np.arange(40.0).reshape(20, 2), labels=np.repeat([0, 1], 10))
    train, queries, _ = retrieval_splits(data, 0.2, seed=1)
    assert queries.num_samples == 4 and train.num_samples == 16


def test_transfer_fold_renumbers_both_sides(small):
    folds = [np.array([0, 3]), np.array([1, 2])]
    train, queries, db = transfer_fold(small, folds, 0, 0.2, seed=0)
    assert train.num_classes == 2 and queries.num_classes == 2
    np.testing.assert_array_equal(np.unique(train.labels), [0, 1])
    assert train.num_samples == 60
    assert queries.num_samples + db.num_samples == 60


def test_fold_reports_are_averaged():
    def report(mean_ap, acc):
        return RetrievalReport(kind="hclm", bits=4, mean_ap=mean_ap, precision_at_k={1: mean_ap},
                               query_ap=[mean_ap], metrics={"code_accuracy": acc}, binarization_histogram=[1, 2])

    merged = aggregate_fold_reports([{"hclm": report(0.2, 0.5)}, {"hclm": report(0.6, 0.7)}])["hclm"]
    assert merged.mean_ap == pytest.approx(0.4)
    assert merged.precision_at_k[1] == pytest.approx(0.4)
    assert merged.metrics["code_accuracy"] == pytest.approx(0.6)
    assert merged.metrics["fold1_map"] == 0.6
    assert merged.query_ap == [0.2, 0.6]
    assert merged.binarization_histogram == [2, 4]

# -------------------------------------------------------------------------------------------------
# Graphs
# -------------------------------------------------------------------------------------------------

def test_graph_nodes():
    assert {"prepare_data", "design_proxies", "tune_lambda", "train", "evaluate", "assemble_report"} <= set(app.get_graph().nodes)
    assert {"prepare_folds", "select_fold", "collect_fold", "aggregate_folds"} <= set(transfer_app.get_graph().nodes)


def test_ablation_run(small):
    result = run_ablation(small, _config())
    report = result.report
    assert set(report.reports) == {"learned", "random", "random_binary", "tammes", "aligned", "hclm", "shclm"}
    assert all(0.0 <= r.mean_ap <= 1.0 for r in report.reports.values())
    assert "tammes_min_squared_distance" in report.summary
    assert list(result.events["stage"]) == ["Prepare Data", "Design Proxies", "Train", "Evaluate", "Report"]
    assert set(result.loss_curves["arm"]) == set(report.reports)
    assert "alignment_trace" in result.diagnostics


def test_ablation_margins_survive_alignment(small):
    report = run_ablation(small, _config(kinds=["tammes", "aligned"])).report
    np.testing.assert_allclose(report.reports["aligned"].margins, report.reports["tammes"].margins, atol=1e-6)


def test_reports_are_reproducible(small):
    cfg = _config(kinds=["hclm", "random_binary"])
    assert report_json(run_ablation(small, cfg).report) == report_json(run_ablation(small, cfg).report)


def test_supervised_run(small):
    report = run_supervised(small, _config()).report
    assert set(report.reports) == {"shclm", "shclm+triplet"}
    assert report.reports["shclm+triplet"].metrics["lambda"] == 1.0
    assert report.reports["shclm"].classification_accuracy is not None


def test_supervised_rejects_tagged_data(small_tagged):
    with pytest.raises(ValueError, match="single-label"):
        run_supervised(small_tagged, _config())


def test_failed_stage_is_logged(small_tagged):
    with pytest.raises(ValueError) as info:
        run_supervised(small_tagged, _config())
    last = info.value.events.iloc[-1]
    assert last["stage"] == "Prepare Data"
    assert last["event_status"] == "FAILURE"
    assert "single-label" in last["error_details"]


def test_multilabel_run_with_lambda_sweep(small_tagged):
    result = run_multilabel(small_tagged, _config(sweep_lambda=True, lambda_grid=[0.1, 1.0]))
    assert result.report.summary["lambda"] in (0.1, 1.0)
    assert "Tune Lambda" in list(result.events["stage"])
    assert set(result.report.reports) == {"hclm", "shclm", "shclm+triplet"}


def test_multilabel_rejects_single_label_data(small):
    with pytest.raises(ValueError, match="tagged"):
        run_multilabel(small, _config())


def test_transfer_run(small):
    result = run_transfer(small, _config(transfer_folds=2))
    report = result.report
    assert set(report.reports) == {"hclm", "shclm", "triplet", "shclm+triplet"}
    for r in report.reports.values():
        assert {"fold0_map", "fold1_map", "code_accuracy"} <= set(r.metrics)
        assert 0.0 <= r.metrics["code_accuracy"] <= 1.0
    assert list(result.events["stage"]).count("Collect Fold") == 2
    assert set(result.loss_curves["fold"]) == {0, 1}


def test_unknown_experiment(small):
    with pytest.raises(ValueError, match="unknown experiment"):
        run_pipeline("pretraining", small, _config())

# -------------------------------------------------------------------------------------------------
# Desk-scale orderings
# -------------------------------------------------------------------------------------------------

@pytest.mark.slow
def test_ablation_orderings():
    data = synth_generate(SynthConfig(seed=0))
    cfg = ExperimentConfig(bits=16, kinds=["random_binary", "tammes", "aligned", "hclm", "shclm"], seed=0)
    report = run_ablation(data, cfg).report.reports
    assert report["hclm"].mean_binarization_error < report["aligned"].mean_binarization_error
    np.testing.assert_allclose(report["tammes"].margins, report["aligned"].margins, atol=1e-6)
    assert report["shclm"].mean_ap >= report["hclm"].mean_ap
    assert report["hclm"].mean_ap >= report["random_binary"].mean_ap


@pytest.mark.slow
def test_transfer_triplet_term_helps_unseen_classes():
    report = run_transfer(synth_generate(SynthConfig(seed=0)), ExperimentConfig(bits=16, transfer_folds=4, seed=0)).report
    assert report.reports["shclm+triplet"].mean_ap >= report.reports["shclm"].mean_ap
