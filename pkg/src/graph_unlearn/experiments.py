"""Seeded experiment sweeps: train -> unlearn -> attack -> aggregate report.

Every repetition derives its own RNG streams from the base seed with
``derive_seed``, so any single (method, fraction, repetition) cell can be
re-run in isolation and reproduce its in-sweep numbers exactly (wall times
aside).  Cell failures are recorded and do not stop the sweep.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import DatasetBundle, generate_synthetic, load_dataset
from .errors import ValidationError
from .graph import build_adjacency, merge_train_val, sample_unlearning_set
from .mia import run_membership_attack
from .models import ModelConfig, TargetTable, accuracy, model_forward, train
from .numerics import derive_seed, make_rng
from .unlearning import (
    METHODS,
    FineTuneConfig,
    class_mean_posteriors,
    clr_targets,
    cnnf_targets,
    fine_tune,
    naive_unlearn,
    retrain,
    tnmpp_targets,
)


@dataclass
class ExperimentConfig:
    dataset: str | None = None  # portable-format directory
    synthetic: dict | None = None  # generate_synthetic kwargs
    architecture: str = "gcn"
    hidden_dim: int = 16
    sgc_hops: int = 2
    learning_rate: float = 0.001
    max_epochs: int = 1600
    methods: list = field(default_factory=lambda: ["retrain", "clr", "tnmpp", "cnnf"])
    fractions: list = field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8])
    repetitions: int = 5
    base_seed: int = 0
    output_dir: str = "runs"
    fine_tune_max_epochs: int = 200
    fine_tune_window: int = 10
    fine_tune_tol: float = 1e-4
    jobs: int = 1
    export_loss_histories: bool = True

    def __post_init__(self):
        if (self.dataset is None) == (self.synthetic is None):
            raise ValidationError("config needs exactly one of dataset / synthetic")
        for m in self.methods:
            if m not in METHODS:
                raise ValidationError(f"unknown method {m!r}")
        for f in self.fractions:
            if not 0.0 < f < 1.0:
                raise ValidationError(f"fraction {f} outside (0, 1)")
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def model_config(self, seed: int) -> ModelConfig:
        return ModelConfig(
            architecture=self.architecture,
            hidden_dim=self.hidden_dim,
            sgc_hops=self.sgc_hops,
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            seed=seed,
        )

    def fine_tune_config(self) -> FineTuneConfig:
        return FineTuneConfig(
            learning_rate=self.learning_rate,
            max_epochs=self.fine_tune_max_epochs,
            window=self.fine_tune_window,
            tol=self.fine_tune_tol,
        )


def load_bundle(config: ExperimentConfig) -> DatasetBundle:
    if config.dataset is not None:
        return load_dataset(config.dataset)
    try:
        return generate_synthetic(**config.synthetic)
    except TypeError as exc:
        raise ValidationError(f"bad synthetic spec: {exc}") from exc


def run_one_cell(
    config: ExperimentConfig,
    bundle: DatasetBundle,
    adj,
    params_org,
    posteriors_org: np.ndarray,
    method: str,
    fraction: float,
    rep: int,
):
    """One (method, fraction, repetition) run; returns a plain dict."""
    graph, base = bundle.graph, config.base_seed
    splits = sample_unlearning_set(
        merge_train_val(bundle.splits),
        fraction,
        make_rng(derive_seed(base, "split", fraction, rep)),
    )
    method_seed = derive_seed(base, method, fraction, rep)
    provenance = {
        "dataset": bundle.name,
        "method": method,
        "fraction": fraction,
        "repetition": rep,
        "seed": method_seed,
    }
    table = class_mean_posteriors(posteriors_org, graph.labels, splits.test)

    if method == "retrain":
        result = retrain(
            graph, adj, splits, config.model_config(method_seed),
            make_rng(method_seed), provenance,
        )
    elif method == "naive":
        result = naive_unlearn(
            params_org, graph, adj, graph.labels, splits.unlearning,
            config.fine_tune_config(), provenance,
        )
    else:
        if method == "clr":
            targets = clr_targets(graph.labels, splits, table)
        elif method == "tnmpp":
            targets = tnmpp_targets(adj, posteriors_org, splits, graph.labels, table)
        else:
            targets = cnnf_targets(adj, posteriors_org, graph.labels, splits, table)
        result = fine_tune(
            params_org, graph, adj, targets, splits.labeled,
            config.fine_tune_config(), method=method, provenance=provenance,
        )

    posteriors = model_forward(adj, graph.features, result.params).posteriors
    mia = run_membership_attack(
        posteriors, graph.labels, splits, derive_seed(base, "mia", method, fraction, rep)
    )
    return {
        "method": method,
        "fraction": fraction,
        "repetition": rep,
        "seed": method_seed,
        "accuracy": accuracy(posteriors, graph.labels, splits.test),
        "mia_all": mia.all_node_accuracy,
        "mia_unlearning": mia.unlearning_node_accuracy,
        "epochs_run": result.report.epochs_run,
        "wall_time": result.report.wall_time,
        "diverged_at": result.report.diverged_at,
        "loss_history": result.report.loss_history,
    }


def train_original(config: ExperimentConfig, bundle: DatasetBundle, adj, rep: int):
    """The shared pre-unlearning model for one repetition."""
    graph = bundle.graph
    labeled = merge_train_val(bundle.splits).labeled
    seed = derive_seed(config.base_seed, "org", rep)
    targets = TargetTable.one_hot(graph.labels, labeled, graph.num_classes)
    params, report = train(
        graph, adj, config.model_config(seed), make_rng(seed), labeled, targets
    )
    posteriors = model_forward(adj, graph.features, params).posteriors
    return params, posteriors, report


def _run_repetition(config: ExperimentConfig, rep: int):
    bundle = load_bundle(config)
    adj = build_adjacency(bundle.graph)
    params_org, posteriors_org, org_report = train_original(config, bundle, adj, rep)
    runs = [
        {
            "method": "original",
            "fraction": None,
            "repetition": rep,
            "seed": derive_seed(config.base_seed, "org", rep),
            "accuracy": accuracy(
                posteriors_org, bundle.graph.labels, bundle.splits.test
            ),
            "epochs_run": org_report.epochs_run,
            "wall_time": org_report.wall_time,
            "loss_history": org_report.loss_history,
        }
    ]
    for fraction in config.fractions:
        for method in config.methods:
            try:
                runs.append(
                    run_one_cell(
                        config, bundle, adj, params_org, posteriors_org,
                        method, fraction, rep,
                    )
                )
            except Exception as exc:  # isolate cell failures
                runs.append(
                    {
                        "method": method,
                        "fraction": fraction,
                        "repetition": rep,
                        "failed": f"{type(exc).__name__}: {exc}",
                    }
                )
    return runs


def _std(values) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def run_experiment(config: ExperimentConfig) -> dict:
    """Full sweep; returns the report dict (also what gets serialized)."""
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            per_rep = list(
                pool.map(_run_repetition, [config] * config.repetitions,
                         range(config.repetitions))
            )
    else:
        per_rep = [_run_repetition(config, rep) for rep in range(config.repetitions)]
    runs = [run for rep_runs in per_rep for run in rep_runs]

    cells = {}
    for fraction in config.fractions:
        for method in config.methods:
            key = f"{method}@{fraction:g}"
            ok = [
                r for r in runs
                if r["method"] == method and r["fraction"] == fraction
                and "failed" not in r
            ]
            failed = [
                r for r in runs
                if r["method"] == method and r["fraction"] == fraction
                and "failed" in r
            ]
            if not ok:
                cells[key] = {
                    "method": method,
                    "fraction": fraction,
                    "failed": failed[0]["failed"] if failed else "no runs",
                }
                continue
            acc = [r["accuracy"] for r in ok]
            mia_all = [r["mia_all"] for r in ok]
            mia_unl = [r["mia_unlearning"] for r in ok]
            epochs = [r["epochs_run"] for r in ok]
            wall = [r["wall_time"] for r in ok]
            cells[key] = {
                "method": method,
                "fraction": fraction,
                "accuracy_mean": float(np.mean(acc)),
                "accuracy_std": _std(acc),
                "mia_all_mean": float(np.mean(mia_all)),
                "mia_all_std": _std(mia_all),
                "mia_unlearning_mean": float(np.mean(mia_unl)),
                "mia_unlearning_std": _std(mia_unl),
                "epochs_mean": float(np.mean(epochs)),
                "wall_time_mean": float(np.mean(wall)),
                "wall_time_std": _std(wall),
                "failures": [r["failed"] for r in failed],
            }
    return {
        "config": dataclasses.asdict(config),
        "cells": cells,
        "runs": [
            {k: v for k, v in r.items() if k != "loss_history"} for r in runs
        ],
        "loss_histories": {
            _run_tag(r): r["loss_history"] for r in runs if "loss_history" in r
        },
    }


def _run_tag(run: dict) -> str:
    if run["fraction"] is None:
        return f"original_rep{run['repetition']}"
    return f"{run['method']}_{run['fraction']:g}_rep{run['repetition']}"


CSV_COLUMNS = [
    "method", "fraction",
    "accuracy_mean", "accuracy_std",
    "mia_all_mean", "mia_all_std",
    "mia_unlearning_mean", "mia_unlearning_std",
    "epochs_mean", "wall_time_mean", "wall_time_std",
]


def write_report(report: dict, output_dir) -> dict:
    """Write report.json, report.csv, and per-run loss-history CSVs.

    The CSV carries exactly the JSON cell numbers (repr round-trip).
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    json_path = output_dir / "report.json"
    slim = {k: v for k, v in report.items() if k != "loss_histories"}
    json_path.write_text(json.dumps(slim, sort_keys=True, indent=1))

    csv_path = output_dir / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for cell in report["cells"].values():
            if "failed" in cell:
                writer.writerow([cell["method"], repr(cell["fraction"])]
                                + ["failed"] * (len(CSV_COLUMNS) - 2))
                continue
            writer.writerow(
                [cell["method"]]
                + [repr(float(cell[c])) for c in CSV_COLUMNS[1:]]
            )

    paths = {"json": json_path, "csv": csv_path}
    if report.get("loss_histories"):
        hist_dir = output_dir / "loss_histories"
        hist_dir.mkdir(exist_ok=True)
        for tag, history in report["loss_histories"].items():
            with open(hist_dir / f"{tag}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "loss"])
                for i, loss in enumerate(history, start=1):
                    writer.writerow([i, repr(float(loss))])
        paths["loss_histories"] = hist_dir
    return paths
