"""Node unlearning by target replacement plus the retrain/inverse-gradient baselines.

All three replacement methods swap the one-hot labels of the unlearning
nodes for soft posterior-derived distributions computed ONCE from the
original model, then fine-tune from the original parameters on the full
labeled set:

    CLR    class mean of the test-set posteriors for the node's class
    TNMPP  mean posterior of all 1-hop neighbors (training neighbors included
           by design; that is exactly why its forgetting is weaker)
    CNNF   mean posterior of same-class neighbors outside the labeled
           training pool, falling back to the CLR class mean when none exist
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UnsupportedClassError, ValidationError
from .graph import Graph, NormalizedAdjacency, SplitIndices, neighbors
from .models import (
    ModelConfig,
    ModelParams,
    StoppingRule,
    TargetTable,
    TrainReport,
    optimize,
    save_checkpoint,
    train,
)

METHODS = ("clr", "tnmpp", "cnnf", "naive", "retrain")


@dataclass(frozen=True)
class ClassMeanTable:
    """Per-class mean posterior over the test set, with support counts."""

    means: np.ndarray  # (C, C)
    support: np.ndarray  # (C,) int

    def row(self, cls: int) -> np.ndarray:
        if self.support[cls] == 0:
            raise UnsupportedClassError(cls)
        return self.means[cls]


def class_mean_posteriors(
    posteriors: np.ndarray, labels: np.ndarray, test_idx
) -> ClassMeanTable:
    """Arithmetic mean of test-node posteriors grouped by ground-truth class."""
    test_idx = np.asarray(test_idx, dtype=np.int64)
    if test_idx.size == 0:
        raise ValidationError("class_mean_posteriors: empty test index set")
    num_classes = posteriors.shape[1]
    means = np.zeros((num_classes, num_classes))
    support = np.zeros(num_classes, dtype=np.int64)
    labels = np.asarray(labels)
    for cls in range(num_classes):
        members = test_idx[labels[test_idx] == cls]
        support[cls] = members.size
        if members.size:
            means[cls] = posteriors[members].mean(axis=0)
    return ClassMeanTable(means=means, support=support)


def _base_targets(labels: np.ndarray, splits: SplitIndices, num_classes: int) -> TargetTable:
    if splits.labeled is None:
        raise ValidationError("splits must be merged before building targets")
    return TargetTable.one_hot(labels, splits.labeled, num_classes)


def clr_targets(
    labels: np.ndarray, splits: SplitIndices, table: ClassMeanTable
) -> TargetTable:
    """Replace each unlearning node's target with its class's mean test posterior."""
    base = _base_targets(labels, splits, table.means.shape[0])
    unl = splits.unlearning if splits.unlearning is not None else np.array([], np.int64)
    if unl.size == 0:
        return base
    rows = np.stack([table.row(int(labels[v])) for v in unl])
    return base.with_soft_rows(unl, rows)


def tnmpp_targets(
    adj: NormalizedAdjacency,
    posteriors: np.ndarray,
    splits: SplitIndices,
    labels: np.ndarray,
    table: ClassMeanTable,
) -> TargetTable:
    """Replace each unlearning node's target with the mean posterior of ALL its
    1-hop neighbors, whatever split they belong to.

    Isolated nodes fall back to the class-mean row.
    """
    base = _base_targets(labels, splits, posteriors.shape[1])
    unl = splits.unlearning if splits.unlearning is not None else np.array([], np.int64)
    if unl.size == 0:
        return base
    rows = []
    for v in unl:
        nbrs = neighbors(adj, int(v))
        if nbrs.size:
            rows.append(posteriors[nbrs].mean(axis=0))
        else:
            rows.append(table.row(int(labels[v])))
    return base.with_soft_rows(unl, np.stack(rows))


def cnnf_filtered_neighbors(
    adj: NormalizedAdjacency,
    labels: np.ndarray,
    splits: SplitIndices,
    v: int,
) -> np.ndarray:
    """Neighbors of v outside the labeled training pool that share v's class."""
    if splits.labeled is None:
        raise ValidationError("splits must be merged before CNNF filtering")
    nbrs = neighbors(adj, int(v))
    if nbrs.size == 0:
        return nbrs
    outside = ~np.isin(nbrs, splits.labeled)
    same_class = np.asarray(labels)[nbrs] == labels[v]
    return nbrs[outside & same_class]


def cnnf_targets(
    adj: NormalizedAdjacency,
    posteriors: np.ndarray,
    labels: np.ndarray,
    splits: SplitIndices,
    table: ClassMeanTable,
) -> TargetTable:
    """Mean posterior of the class-consistent non-training neighbors; class-mean
    fallback when the filtered set is empty."""
    base = _base_targets(labels, splits, posteriors.shape[1])
    unl = splits.unlearning if splits.unlearning is not None else np.array([], np.int64)
    if unl.size == 0:
        return base
    rows = []
    for v in unl:
        kept = cnnf_filtered_neighbors(adj, labels, splits, int(v))
        if kept.size:
            rows.append(posteriors[kept].mean(axis=0))
        else:
            rows.append(table.row(int(labels[v])))
    return base.with_soft_rows(unl, np.stack(rows))


@dataclass
class FineTuneConfig:
    learning_rate: float = 0.001
    max_epochs: int = 200
    window: int = 10
    tol: float = 1e-4

    def __post_init__(self):
        if self.window < 2:
            raise ValidationError("convergence window must be >= 2")
        if self.tol <= 0:
            raise ValidationError("convergence tolerance must be > 0")

    def stopping(self) -> StoppingRule:
        return StoppingRule(window=self.window, tol=self.tol)


@dataclass
class UnlearningResult:
    method: str
    params: ModelParams
    report: TrainReport
    provenance: dict = field(default_factory=dict)

    def save(self, directory) -> None:
        """Checkpoint plus a JSON sidecar describing how it was produced."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_checkpoint(
            self.params,
            directory / "result.ckpt",
            seed=self.provenance.get("seed", 0),
            epochs=self.report.epochs_run,
        )
        sidecar = dict(self.provenance)
        sidecar.update(
            method=self.method,
            epochs_run=self.report.epochs_run,
            final_loss=self.report.final_loss,
            wall_time=self.report.wall_time,
            diverged_at=self.report.diverged_at,
        )
        (directory / "provenance.json").write_text(
            json.dumps(sidecar, sort_keys=True, indent=1)
        )


def fine_tune(
    params_org: ModelParams,
    graph: Graph,
    adj: NormalizedAdjacency,
    targets: TargetTable,
    labeled_idx,
    config: FineTuneConfig,
    method: str = "fine_tune",
    provenance: dict | None = None,
) -> UnlearningResult:
    """Minimize the replaced-target cross entropy over the full labeled set,
    starting from the original parameters, until the windowed loss stalls."""
    params, report = optimize(
        params_org,
        adj,
        graph.features,
        targets,
        labeled_idx,
        learning_rate=config.learning_rate,
        max_epochs=config.max_epochs,
        stopping=config.stopping(),
    )
    return UnlearningResult(
        method=method, params=params, report=report, provenance=provenance or {}
    )


def naive_unlearn(
    params_org: ModelParams,
    graph: Graph,
    adj: NormalizedAdjacency,
    labels: np.ndarray,
    unlearning_idx,
    config: FineTuneConfig,
    provenance: dict | None = None,
) -> UnlearningResult:
    """Inverse-gradient baseline: ascend the one-hot loss of the unlearning
    nodes.  Wrecks utility by design; divergence returns the last finite
    parameters instead of aborting a sweep."""
    unlearning_idx = np.asarray(unlearning_idx, dtype=np.int64)
    if unlearning_idx.size == 0:
        raise ValidationError("naive_unlearn: empty unlearning set")
    targets = TargetTable.one_hot(labels, unlearning_idx, graph.num_classes)
    params, report = optimize(
        params_org,
        adj,
        graph.features,
        targets,
        unlearning_idx,
        learning_rate=config.learning_rate,
        max_epochs=config.max_epochs,
        stopping=config.stopping(),
        ascend=True,
        on_divergence="return",
    )
    return UnlearningResult(
        method="naive", params=params, report=report, provenance=provenance or {}
    )


def retrain(
    graph: Graph,
    adj: NormalizedAdjacency,
    splits: SplitIndices,
    config: ModelConfig,
    rng: np.random.Generator,
    provenance: dict | None = None,
) -> UnlearningResult:
    """Train from scratch on the retained labeled nodes only."""
    if splits.retained is None or splits.retained.size == 0:
        raise ValidationError("retrain: retained set is empty")
    targets = TargetTable.one_hot(graph.labels, splits.retained, graph.num_classes)
    params, report = train(graph, adj, config, rng, splits.retained, targets)
    return UnlearningResult(
        method="retrain", params=params, report=report, provenance=provenance or {}
    )
