from langgraph.graph import END, StateGraph

from pipelines.state import ExperimentState
from pipelines.workflow_nodes import (aggregate_folds_node, collect_fold_node, design_proxies_node, evaluate_node,
                                      prepare_data_node, prepare_folds_node, report_node, route_after_collect,
                                      route_after_design, select_fold_node, train_node, tune_lambda_node)

# Ablation, supervised and multi-label protocols
workflow = StateGraph(ExperimentState)

workflow.add_node("prepare_data", prepare_data_node)
workflow.add_node("design_proxies", design_proxies_node)
workflow.add_node("tune_lambda", tune_lambda_node)
workflow.add_node("train", train_node)
workflow.add_node("evaluate", evaluate_node)
workflow.add_node("assemble_report", report_node)

workflow.set_entry_point("prepare_data")

workflow.add_edge("prepare_data", "design_proxies")
workflow.add_conditional_edges("design_proxies", route_after_design, {"tune_lambda": "tune_lambda", "train": "train"})
workflow.add_edge("tune_lambda", "train")
workflow.add_edge("train", "evaluate")
workflow.add_edge("evaluate", "assemble_report")
workflow.add_edge("assemble_report", END)

app = workflow.compile()

# Transfer protocol: one design/train/evaluate pass per class fold
transfer_workflow = StateGraph(ExperimentState)

transfer_workflow.add_node("prepare_folds", prepare_folds_node)
transfer_workflow.add_node("select_fold", select_fold_node)
transfer_workflow.add_node("design_proxies", design_proxies_node)
transfer_workflow.add_node("train", train_node)
transfer_workflow.add_node("evaluate", evaluate_node)
transfer_workflow.add_node("collect_fold", collect_fold_node)
transfer_workflow.add_node("aggregate_folds", aggregate_folds_node)
transfer_workflow.add_node("assemble_report", report_node)

transfer_workflow.set_entry_point("prepare_folds")

transfer_workflow.add_edge("prepare_folds", "select_fold")
transfer_workflow.add_edge("select_fold", "design_proxies")
transfer_workflow.add_edge("design_proxies", "train")
transfer_workflow.add_edge("train", "evaluate")
transfer_workflow.add_edge("evaluate", "collect_fold")
transfer_workflow.add_conditional_edges("collect_fold", route_after_collect,
                                        {"select_fold": "select_fold", "aggregate_folds": "aggregate_folds"})
transfer_workflow.add_edge("aggregate_folds", "assemble_report")
transfer_workflow.add_edge("assemble_report", END)

transfer_app = transfer_workflow.compile()
