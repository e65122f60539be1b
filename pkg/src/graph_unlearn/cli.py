"""Command-line front end: train, unlearn, mia, experiment, dataset-gen,
dataset-validate.

Exit codes: 0 success, 2 usage or input validation, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .dataset_io import generate_synthetic, load_dataset
from .errors import GraphUnlearnError, ValidationError
from .graph import build_adjacency, merge_train_val, sample_unlearning_set
from .mia import export_posteriors_csv, run_membership_attack
from .models import (
    ModelConfig,
    TargetTable,
    accuracy,
    load_checkpoint,
    model_forward,
    save_checkpoint,
    train,
)
from .numerics import make_rng
from .unlearning import (
    FineTuneConfig,
    class_mean_posteriors,
    clr_targets,
    cnnf_targets,
    fine_tune,
    naive_unlearn,
    retrain,
    tnmpp_targets,
)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--arch", choices=["gcn", "sgc"], default="gcn")
    p.add_argument("--hidden", type=int, default=16, help="GCN hidden width")
    p.add_argument("--hops", type=int, default=2, help="SGC propagation steps")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=1600)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--weight-decay", type=float, default=0.0)


def _add_fine_tune_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ft-epochs", type=int, default=200)
    p.add_argument("--ft-window", type=int, default=10)
    p.add_argument("--ft-tol", type=float, default=1e-4)
    p.add_argument("--ft-lr", type=float, default=0.001)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graph-unlearn",
        description="GNN training, node unlearning, and membership-inference evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the original model on train+val")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)

    p = sub.add_parser("unlearn", help="remove sampled labeled nodes from a model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", required=True,
                   choices=["clr", "tnmpp", "cnnf", "naive", "retrain"])
    p.add_argument("--fraction", type=float, required=True,
                   help="share of the merged labeled set to unlearn, in (0,1)")
    p.add_argument("--seed", type=int, default=0,
                   help="seeds the unlearning-set draw (and retrain init)")
    p.add_argument("--from-checkpoint", default=None,
                   help="original model (required unless --method retrain)")
    p.add_argument("--out", required=True, help="output directory")
    _add_model_flags(p)
    _add_fine_tune_flags(p)

    p = sub.add_parser("mia", help="membership-inference attack on a result")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True, help="model to attack")
    p.add_argument("--provenance", required=True,
                   help="provenance.json written by `unlearn`")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--export-posteriors", default=None,
                   help="optional CSV of raw per-node posteriors")

    p = sub.add_parser("experiment", help="full sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override config output_dir")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel repetitions (default $GUNLEARN_JOBS or 1)")

    p = sub.add_parser("dataset-gen", help="write a synthetic SBM dataset")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--features", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--p-intra", type=float, required=True)
    p.add_argument("--p-inter", type=float, required=True)
    p.add_argument("--signal", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", required=True)

    p = sub.add_parser("dataset-validate", help="validate a dataset directory")
    p.add_argument("directory")

    return parser


def _load_merged(path):
    bundle = load_dataset(path)
    splits = merge_train_val(bundle.splits)
    adj = build_adjacency(bundle.graph)
    return bundle, splits, adj


def _model_config(args, seed: int) -> ModelConfig:
    return ModelConfig(
        architecture=args.arch,
        hidden_dim=args.hidden,
        sgc_hops=args.hops,
        learning_rate=args.lr,
        max_epochs=args.epochs,
        seed=seed,
        dropout=args.dropout,
        weight_decay=args.weight_decay,
    )


def cmd_train(args) -> int:
    bundle, splits, adj = _load_merged(args.dataset)
    graph = bundle.graph
    config = _model_config(args, args.seed)
    targets = TargetTable.one_hot(graph.labels, splits.labeled, graph.num_classes)
    params, report = train(
        graph, adj, config, make_rng(args.seed), splits.labeled, targets
    )
    save_checkpoint(params, args.out, seed=args.seed, epochs=report.epochs_run)
    posteriors = model_forward(adj, graph.features, params).posteriors
    print(f"epochs_run={report.epochs_run} final_loss={report.final_loss:.6f} "
          f"wall_time={report.wall_time:.2f}s")
    print(f"train_accuracy={accuracy(posteriors, graph.labels, splits.labeled):.4f}")
    print(f"test_accuracy={accuracy(posteriors, graph.labels, splits.test):.4f}")
    print(f"checkpoint={args.out}")
    return 0


def cmd_unlearn(args) -> int:
    if args.method != "retrain" and args.from_checkpoint is None:
        raise ValidationError(f"--method {args.method} requires --from-checkpoint")
    bundle, splits, adj = _load_merged(args.dataset)
    graph = bundle.graph
    splits = sample_unlearning_set(splits, args.fraction, make_rng(args.seed))
    provenance = {
        "dataset": bundle.name,
        "fraction": args.fraction,
        "seed": args.seed,
        "unlearning_indices": splits.unlearning.tolist(),
        "parent_checkpoint": args.from_checkpoint,
    }

    ft = FineTuneConfig(
        learning_rate=args.ft_lr,
        max_epochs=args.ft_epochs,
        window=args.ft_window,
        tol=args.ft_tol,
    )
    if args.method == "retrain":
        provenance["parent_checkpoint"] = None
        result = retrain(
            graph, adj, splits, _model_config(args, args.seed),
            make_rng(args.seed), provenance,
        )
    else:
        params_org, _ = load_checkpoint(args.from_checkpoint)
        posteriors_org = model_forward(adj, graph.features, params_org).posteriors
        table = class_mean_posteriors(posteriors_org, graph.labels, splits.test)
        if args.method == "naive":
            result = naive_unlearn(
                params_org, graph, adj, graph.labels, splits.unlearning, ft,
                provenance,
            )
        else:
            if args.method == "clr":
                targets = clr_targets(graph.labels, splits, table)
            elif args.method == "tnmpp":
                targets = tnmpp_targets(
                    adj, posteriors_org, splits, graph.labels, table
                )
            else:
                targets = cnnf_targets(
                    adj, posteriors_org, graph.labels, splits, table
                )
            result = fine_tune(
                params_org, graph, adj, targets, splits.labeled, ft,
                method=args.method, provenance=provenance,
            )
    result.save(args.out)
    posteriors = model_forward(adj, graph.features, result.params).posteriors
    print(f"method={result.method} epochs_run={result.report.epochs_run} "
          f"wall_time={result.report.wall_time:.3f}s")
    print(f"test_accuracy={accuracy(posteriors, graph.labels, splits.test):.4f}")
    print(f"results={args.out}")
    return 0


def cmd_mia(args) -> int:
    bundle, splits, adj = _load_merged(args.dataset)
    graph = bundle.graph
    provenance = json.loads(Path(args.provenance).read_text())
    unlearning = np.asarray(provenance["unlearning_indices"], dtype=np.int64)
    if np.setdiff1d(unlearning, splits.labeled).size:
        raise ValidationError("provenance unlearning set is not within the labeled set")
    splits = dataclasses.replace(
        splits,
        unlearning=unlearning,
        retained=np.setdiff1d(splits.labeled, unlearning),
    )
    params, _ = load_checkpoint(args.checkpoint)
    posteriors = model_forward(adj, graph.features, params).posteriors
    report = run_membership_attack(posteriors, graph.labels, splits, args.seed)
    Path(args.out).write_text(report.to_json())
    if args.export_posteriors:
        export_posteriors_csv(posteriors, graph.labels, splits,
                              args.export_posteriors)
    print(f"all_node_accuracy={report.all_node_accuracy:.4f}")
    print(f"unlearning_node_accuracy={report.unlearning_node_accuracy:.4f}")
    print(f"report={args.out}")
    return 0


def cmd_experiment(args) -> int:
    config = experiments.ExperimentConfig.from_json(args.config)
    if args.out is not None:
        config.output_dir = args.out
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("GUNLEARN_JOBS", "1"))
    config.jobs = jobs
    report = experiments.run_experiment(config)
    paths = experiments.write_report(report, config.output_dir)
    for key, value in paths.items():
        print(f"{key}={value}")
    failures = [
        f"{cell['method']}@{cell['fraction']}: {cell['failed']}"
        for cell in report["cells"].values() if "failed" in cell
    ]
    for line in failures:
        print(f"cell failed: {line}", file=sys.stderr)
    return 0


def cmd_dataset_gen(args) -> int:
    from .dataset_io import save_dataset

    bundle = generate_synthetic(
        num_nodes=args.nodes,
        num_features=args.features,
        num_classes=args.classes,
        p_intra=args.p_intra,
        p_inter=args.p_inter,
        label_signal=args.signal,
        seed=args.seed,
        name=args.name,
    )
    save_dataset(bundle, args.out)
    print(f"nodes={bundle.graph.num_nodes} edges={bundle.graph.edges.shape[0]} "
          f"classes={bundle.graph.num_classes}")
    print(f"dataset={args.out}")
    return 0


def cmd_dataset_validate(args) -> int:
    bundle = load_dataset(args.directory)
    g = bundle.graph
    print(f"name={bundle.name}")
    print(f"nodes={g.num_nodes} undirected_edges={g.edges.shape[0]} "
          f"features={g.num_features} classes={g.num_classes}")
    print(f"train/val/test={bundle.splits.train.size}/"
          f"{bundle.splits.val.size}/{bundle.splits.test.size}")
    print("ok")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "unlearn": cmd_unlearn,
    "mia": cmd_mia,
    "experiment": cmd_experiment,
    "dataset-gen": cmd_dataset_gen,
    "dataset-validate": cmd_dataset_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GraphUnlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
