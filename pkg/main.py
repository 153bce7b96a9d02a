"""
Main entry point for proxyhash
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from core.config import (AlignConfig, AssignConfig, TammesConfig, experiment_config_from_flat,
                         load_config_file, load_environment, synth_config_from_flat)
from core.errors import ProxyHashError
from core.event_ingestion import loss_curve_log
from core.storage import load_codes, load_layer, load_proxies, save_codes, save_layer, save_proxies
from features.dataset import FeatureDataset
from features.io import export_dataset, ingest, read_features
from features.synthetic import synth_generate
from hashing.trainer import train
from pipelines.experiments import run_pipeline
from proxies.alignment import alignment_trace_frame, binarize, itq_rotation, rotate_proxies
from proxies.assignment import apply_assignment, brute_force_assign, greedy_assign_with_trace
from proxies.design import learned_proxies_init, random_binary_proxies, random_proxies, solve_tammes
from proxies.similarity import dataset_similarity
from retrieval.codes import encode
from retrieval.engine import evaluate_codes
from retrieval.reports import emit_report
from theory.equivalence import run_equivalence_suite
from theory.rotation import run_rotation_suite

logger = logging.getLogger("proxyhash")

EXIT_FAILED_CHECK = 1
EXIT_ERROR = 2


# -------------------------------------------------------------------------------------------------
# Helpers
# -------------------------------------------------------------------------------------------------

def _flat_config(args: argparse.Namespace, overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Config-file values overridden by every flag the user actually set."""
    values: Dict[str, Any] = load_config_file(args.config) if getattr(args, "config", None) else {}
    values.update({key: value for key, value in overrides.items() if value is not None})
    return values


def _load_dataset(args: argparse.Namespace) -> FeatureDataset:
    return ingest(args.features, labels_path=args.labels, tags_path=args.tags, split_path=getattr(args, "split", None))


def _add_dataset_flags(parser: argparse.ArgumentParser, split: bool = False) -> None:
    parser.add_argument("--features", required=True, help="PFTR or .csv feature file")
    payload = parser.add_mutually_exclusive_group(required=True)
    payload.add_argument("--labels", help="1-based labels, one per line")
    payload.add_argument("--tags", help="0/1 tag rows, one per line")
    if split:
        parser.add_argument("--split", help="train/db/query per line")


def _train_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {"lambda": args.lam, "margin": args.margin, "epochs": args.epochs, "batch_size": args.batch_size,
            "learning_rate": args.lr, "objective": args.objective, "seed": args.seed}


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--margin", type=float)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--objective", choices=["proxy", "joint", "triplet"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--config", help="flat key=value config file")


# -------------------------------------------------------------------------------------------------
# Commands
# -------------------------------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    values = _flat_config(args, {
        "synth_superclasses": args.superclasses, "synth_classes_per_superclass": args.classes_per_superclass,
        "synth_samples_per_class": args.samples_per_class, "synth_feature_dim": args.feature_dim,
        "synth_noise": args.noise, "synth_multilabel": args.multilabel or None, "seed": args.seed,
    })
    data = synth_generate(synth_config_from_flat(values))
    out = Path(args.out)
    payload = out.with_suffix(".tags" if data.is_multilabel else ".lbl")
    export_dataset(data, out.with_suffix(".pf"), payload, out.with_suffix(".split"))
    print(f"Wrote {data.num_samples} samples to {out.with_suffix('.pf')}, {payload}, {out.with_suffix('.split')}")
    return 0


def cmd_proxies_design(args: argparse.Namespace) -> int:
    if args.kind == "tammes":
        p = solve_tammes(args.classes, args.bits, TammesConfig(restarts=args.restarts, seed=args.seed), args.workers)
    elif args.kind == "random":
        p = random_proxies(args.classes, args.bits, args.seed)
    elif args.kind == "random_binary":
        p = random_binary_proxies(args.classes, args.bits, args.seed)
    else:
        p = learned_proxies_init(args.classes, args.bits, args.seed)
    save_proxies(p, args.out)
    print(f"{p.kind} proxies C={p.num_classes} d={p.dim} -> {args.out}")
    return 0


def cmd_proxies_align(args: argparse.Namespace) -> int:
    p = load_proxies(args.input)
    gamma, trace = itq_rotation(p, AlignConfig(restarts=args.restarts, seed=args.seed), args.workers)
    save_proxies(binarize(gamma, p), args.out)
    if args.aligned_out:
        save_proxies(rotate_proxies(gamma, p), args.aligned_out)
    if args.trace:
        alignment_trace_frame(trace).to_csv(args.trace, index=False)
    print(f"ITQ: error {trace.errors[0]:.6f} -> {trace.errors[-1]:.6f} in {trace.iterations} iterations -> {args.out}")
    return 0


def cmd_proxies_assign(args: argparse.Namespace) -> int:
    p = load_proxies(args.proxies)
    data = _load_dataset(args)
    S = dataset_similarity(data, args.similarity)
    if args.brute_force:
        assignment = brute_force_assign(S, p)
    else:
        assignment, trace, _ = greedy_assign_with_trace(S, p, AssignConfig(restarts=args.restarts, seed=args.seed), args.workers)
        print(f"Assignment objective {trace[0]:.6f} -> {trace[-1]:.6f}")
    if args.similarity_csv:
        S.to_frame().to_csv(args.similarity_csv)
    save_proxies(apply_assignment(p, assignment), args.out)
    print(f"sHCLM proxies -> {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    values = _flat_config(args, {**_train_overrides(args), "learn_proxies": args.learn_proxies or None})
    cfg = experiment_config_from_flat(values).train
    data = _load_dataset(args)
    proxies = load_proxies(args.proxies)
    layer = train(data, proxies, cfg)
    save_layer(layer, args.out)
    if args.loss_curve:
        loss_curve_log({"train": layer}).to_csv(args.loss_curve, index=False)
    print(f"Loss {layer.loss_curve[0]:.4f} -> {layer.loss_curve[-1]:.4f}; layer -> {args.out}")
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    layer = load_layer(args.layer)
    if args.labels or args.tags:
        data = ingest(args.features, labels_path=args.labels, tags_path=args.tags)
        codes = encode(layer, data.features, labels=data.labels, tags=data.tags)
    else:
        codes = encode(layer, read_features(args.features))
    save_codes(codes, args.out)
    print(f"{codes.num_codes} {codes.bits}-bit codes -> {args.out}")
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    db = load_codes(args.db, labels_path=args.labels, tags_path=args.tags)
    queries = load_codes(args.queries, labels_path=args.query_labels, tags_path=args.query_tags)
    query_db_indices = None
    if args.exclude_self:
        if queries.num_codes != db.num_codes:
            raise ValueError("--exclude-self needs the query file to hold the database codes in order")
        query_db_indices = np.arange(queries.num_codes)
    report = evaluate_codes(queries, db, args.kind, args.topn, args.ks, query_db_indices, args.workers)
    emit_report(report, args.report)
    print(f"mAP {report.mean_ap:.4f} over {queries.num_codes} queries -> {args.report}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    suite = run_equivalence_suite if args.suite == "equivalence" else run_rotation_suite
    result = suite(args.trials, args.seed)
    print(f"{result.suite}: {'PASS' if result.passed else 'FAIL'} over {result.trials} trials, worst {result.worst:.3e}")
    for failure in result.failures[:10]:
        print(f"  {failure}")
    return 0 if result.passed else EXIT_FAILED_CHECK


def cmd_experiment(args: argparse.Namespace) -> int:
    values = _flat_config(args, {
        **_train_overrides(args), "bits": args.bits, "kinds": args.kinds, "top_n": args.topn,
        "transfer_folds": getattr(args, "folds", None), "sweep_lambda": getattr(args, "sweep_lambda", None) or None,
        "workers": args.workers,
    })
    cfg = experiment_config_from_flat(values)
    if args.features:
        data = _load_dataset(args)
    else:
        synth = synth_config_from_flat(values)
        if args.command == "multilabel" and not synth.multilabel:
            synth = synth.model_copy(update={"multilabel": True})
        data = synth_generate(synth)
    report_path = Path(args.report)
    events_path = report_path.with_name(f"{report_path.stem}_events.csv")
    try:
        result = run_pipeline(args.command, data, cfg)
    except Exception as exc:
        failed = getattr(exc, "events", None)
        if failed is not None:
            failed.to_csv(events_path, index=False)
        raise

    emit_report(result.report, report_path)
    result.events.to_csv(events_path, index=False)
    if result.loss_curves is not None:
        result.loss_curves.to_csv(report_path.with_name(f"{report_path.stem}_loss_curves.csv"), index=False)
    for arm, report in sorted(result.report.reports.items()):
        print(f"  {arm:>16}: mAP {report.mean_ap:.4f}")
    return 0


# -------------------------------------------------------------------------------------------------
# Parser
# -------------------------------------------------------------------------------------------------

def build_parser(workers: int = 1) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxyhash", description="Hash-consistent proxy embeddings for binary retrieval")
    parser.add_argument("--workers", type=int, default=workers, help="threads for restarts and query scoring")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="generate hierarchical Gaussian features")
    synth.add_argument("--out", required=True, help="output prefix (.pf, .lbl/.tags, .split)")
    synth.add_argument("--superclasses", type=int)
    synth.add_argument("--classes-per-superclass", type=int)
    synth.add_argument("--samples-per-class", type=int)
    synth.add_argument("--feature-dim", type=int)
    synth.add_argument("--noise", type=float)
    synth.add_argument("--multilabel", action="store_true")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--config")
    synth.set_defaults(handler=cmd_synth)

    proxies = commands.add_parser("proxies", help="design, align or assign proxies")
    proxy_commands = proxies.add_subparsers(dest="proxy_command", required=True)

    design = proxy_commands.add_parser("design")
    design.add_argument("--classes", type=int, required=True)
    design.add_argument("--bits", type=int, required=True)
    design.add_argument("--kind", choices=["tammes", "random", "random_binary", "learned"], default="tammes")
    design.add_argument("--restarts", type=int, default=TammesConfig().restarts)
    design.add_argument("--seed", type=int, default=0)
    design.add_argument("--out", required=True)
    design.set_defaults(handler=cmd_proxies_design)

    align = proxy_commands.add_parser("align")
    align.add_argument("--in", dest="input", required=True)
    align.add_argument("--out", required=True, help="HCLM proxies")
    align.add_argument("--aligned-out", help="also write the real-valued rotated proxies")
    align.add_argument("--trace", help="AlignmentTrace CSV")
    align.add_argument("--restarts", type=int, default=AlignConfig().restarts)
    align.add_argument("--seed", type=int, default=0)
    align.set_defaults(handler=cmd_proxies_align)

    assign = proxy_commands.add_parser("assign")
    assign.add_argument("--proxies", required=True)
    _add_dataset_flags(assign)
    assign.add_argument("--similarity", choices=["means", "cooccur"], default="means")
    assign.add_argument("--restarts", type=int, default=AssignConfig().restarts)
    assign.add_argument("--brute-force", action="store_true")
    assign.add_argument("--similarity-csv")
    assign.add_argument("--seed", type=int, default=0)
    assign.add_argument("--out", required=True)
    assign.set_defaults(handler=cmd_proxies_assign)

    train_parser = commands.add_parser("train", help="train a hashing layer against fixed proxies")
    _add_dataset_flags(train_parser)
    train_parser.add_argument("--proxies", required=True)
    _add_train_flags(train_parser)
    train_parser.add_argument("--learn-proxies", action="store_true")
    train_parser.add_argument("--loss-curve", help="per-epoch loss CSV")
    train_parser.add_argument("--out", required=True)
    train_parser.set_defaults(handler=cmd_train)

    encode_parser = commands.add_parser("encode", help="hash features with a trained layer")
    encode_parser.add_argument("--layer", required=True)
    encode_parser.add_argument("--features", required=True)
    payload = encode_parser.add_mutually_exclusive_group()
    payload.add_argument("--labels")
    payload.add_argument("--tags")
    encode_parser.add_argument("--out", required=True)
    encode_parser.set_defaults(handler=cmd_encode)

    retrieve = commands.add_parser("retrieve", help="rank a code database and report mAP")
    retrieve.add_argument("--db", required=True)
    retrieve.add_argument("--queries", required=True)
    retrieve.add_argument("--labels", help="database labels (default: sidecar)")
    retrieve.add_argument("--tags", help="database tags (default: sidecar)")
    retrieve.add_argument("--query-labels")
    retrieve.add_argument("--query-tags")
    retrieve.add_argument("--topn", type=int)
    retrieve.add_argument("--ks", type=int, nargs="*", default=[])
    retrieve.add_argument("--exclude-self", action="store_true", help="queries are the database; drop self-matches")
    retrieve.add_argument("--kind", default="codes", help="arm name stored in the report")
    retrieve.add_argument("--report", required=True)
    retrieve.set_defaults(handler=cmd_retrieve)

    verify = commands.add_parser("verify", help="numerical checks of the loss equivalence and rotation ambiguity")
    verify.add_argument("--suite", choices=["equivalence", "rotation"], required=True)
    verify.add_argument("--trials", type=int, default=100)
    verify.add_argument("--seed", type=int, default=0)
    verify.set_defaults(handler=cmd_verify)

    for name, text in (("ablation", "compare proxy kinds"), ("supervised", "sHCLM vs sHCLM+Triplet"),
                       ("multilabel", "tagged-data protocol"), ("transfer", "class-disjoint folds")):
        experiment = commands.add_parser(name, help=text)
        experiment.add_argument("--features", help="dataset features; synthetic data when absent")
        payload = experiment.add_mutually_exclusive_group()
        payload.add_argument("--labels")
        payload.add_argument("--tags")
        experiment.add_argument("--split")
        experiment.add_argument("--bits", type=int)
        experiment.add_argument("--kinds", help="comma-separated proxy kinds (ablation)")
        experiment.add_argument("--topn", type=int)
        if name == "transfer":
            experiment.add_argument("--folds", type=int)
        if name == "multilabel":
            experiment.add_argument("--sweep-lambda", action="store_true")
        _add_train_flags(experiment)
        experiment.add_argument("--report", required=True)
        experiment.set_defaults(handler=cmd_experiment)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and map failures to exit codes."""
    env = load_environment()
    logging.basicConfig(level=env["log_level"], format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    args = build_parser(env["workers"]).parse_args(argv)
    if args.handler is cmd_experiment and args.features and not (args.labels or args.tags):
        print("error: --features needs --labels or --tags", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.handler(args)
    except (ProxyHashError, ValueError, OSError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
