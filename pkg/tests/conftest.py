import dataclasses
import os
from pathlib import Path

import numpy as np
import pytest

import graph_unlearn as gu


def random_graph(rng, num_nodes, num_features=4, num_classes=3, p=0.3):
    """Erdos-Renyi helper used across oracle tests."""
    edges = [
        (i, j)
        for i in range(num_nodes)
        for j in range(i + 1, num_nodes)
        if rng.random() < p
    ]
    return gu.Graph(
        features=rng.standard_normal((num_nodes, num_features)),
        labels=rng.integers(0, num_classes, num_nodes),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        num_classes=num_classes,
    )


def path_graph(n=3):
    return gu.Graph(
        features=np.zeros((n, 1)),
        labels=np.zeros(n, dtype=np.int64),
        edges=np.array([(i, i + 1) for i in range(n - 1)], dtype=np.int64),
        num_classes=1,
    )


@pytest.fixture(scope="session")
def easy_bundle():
    """Separable 60-node SBM; a GCN fits it almost perfectly."""
    return gu.generate_synthetic(60, 8, 3, 0.3, 0.05, 5.0, seed=1)


@pytest.fixture(scope="session")
def trained_easy(easy_bundle):
    """(bundle, adj, merged splits, org params, org posteriors) shared fixture."""
    adj = gu.build_adjacency(easy_bundle.graph)
    splits = gu.merge_train_val(easy_bundle.splits)
    config = gu.ModelConfig(max_epochs=1600, seed=3)
    targets = gu.TargetTable.one_hot(
        easy_bundle.graph.labels, splits.labeled, easy_bundle.graph.num_classes
    )
    params, report = gu.train(
        easy_bundle.graph, adj, config, gu.make_rng(3), splits.labeled, targets
    )
    posteriors = gu.model_forward(adj, easy_bundle.graph.features, params).posteriors
    return easy_bundle, adj, splits, params, posteriors


def data_dir() -> Path:
    return Path(os.environ.get("GUNLEARN_DATA", Path(__file__).resolve().parent.parent / "data"))


def real_bundle_or_skip(name: str) -> gu.DatasetBundle:
    """Load a converted real dataset, skipping when it has not been fetched."""
    directory = data_dir() / name
    if not (directory / "meta.json").is_file():
        pytest.skip(
            f"real dataset {name!r} not found under {directory}; "
            "fetch the upstream files and run convert-planetoid (see README)"
        )
    return gu.load_dataset(directory)
