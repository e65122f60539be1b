"""Portable on-disk dataset format and a seeded synthetic SBM generator.

A dataset directory holds exactly four files:

    meta.json     name, format_version, counts, and explicit split index arrays
    features.bin  little-endian float64, row-major, num_nodes x num_features
    labels.txt    one base-10 class index per line
    edges.txt     one "u v" pair per line, u < v, each undirected edge once

The loader validates everything it reads and names the offending record in
its error messages; the synthetic generator lets the whole test suite run
with no external data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .graph import Graph, SplitIndices
from .numerics import make_rng

FORMAT_VERSION = 1
_FILES = ("meta.json", "features.bin", "labels.txt", "edges.txt")


@dataclass(frozen=True)
class DatasetBundle:
    graph: Graph
    splits: SplitIndices
    name: str
    format_version: int = FORMAT_VERSION


def save_dataset(bundle: DatasetBundle, directory) -> None:
    """Write the four-file format; byte output is deterministic."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    g = bundle.graph
    meta = {
        "name": bundle.name,
        "format_version": bundle.format_version,
        "num_nodes": g.num_nodes,
        "num_features": g.num_features,
        "num_classes": g.num_classes,
        "num_undirected_edges": int(g.edges.shape[0]),
        "splits": {
            "train": bundle.splits.train.tolist(),
            "val": bundle.splits.val.tolist(),
            "test": bundle.splits.test.tolist(),
        },
    }
    (directory / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    (directory / "features.bin").write_bytes(
        np.ascontiguousarray(g.features, dtype="<f8").tobytes()
    )
    (directory / "labels.txt").write_text(
        "".join(f"{int(y)}\n" for y in g.labels)
    )
    (directory / "edges.txt").write_text(
        "".join(f"{int(u)} {int(v)}\n" for u, v in g.edges)
    )


def load_dataset(directory) -> DatasetBundle:
    """Load and fully validate a dataset directory."""
    directory = Path(directory)
    for name in _FILES:
        if not (directory / name).is_file():
            raise ValidationError(f"missing file: {directory / name}")

    try:
        meta = json.loads((directory / "meta.json").read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"meta.json is not valid JSON: {exc}") from exc
    for key in ("name", "format_version", "num_nodes", "num_features",
                "num_classes", "splits"):
        if key not in meta:
            raise ValidationError(f"meta.json is missing field {key!r}")
    if meta["format_version"] != FORMAT_VERSION:
        raise ValidationError(
            f"unsupported format_version {meta['format_version']}"
        )
    n, f, c = int(meta["num_nodes"]), int(meta["num_features"]), int(meta["num_classes"])

    blob = (directory / "features.bin").read_bytes()
    if len(blob) != 8 * n * f:
        raise ValidationError(
            f"features.bin is {len(blob)} bytes, expected {8 * n * f} "
            f"({n} nodes x {f} features x 8)"
        )
    features = np.frombuffer(blob, dtype="<f8").astype(np.float64).reshape(n, f)

    labels = np.empty(n, dtype=np.int64)
    lines = (directory / "labels.txt").read_text().splitlines()
    if len(lines) != n:
        raise ValidationError(
            f"labels.txt has {len(lines)} lines, expected {n}"
        )
    for i, line in enumerate(lines):
        try:
            labels[i] = int(line.strip())
        except ValueError:
            raise ValidationError(f"labels.txt line {i + 1}: not an integer: {line!r}")
        if not 0 <= labels[i] < c:
            raise ValidationError(
                f"labels.txt line {i + 1}: label {labels[i]} outside [0, {c})"
            )

    edge_lines = (directory / "edges.txt").read_text().splitlines()
    declared = meta.get("num_undirected_edges")
    if declared is not None and declared != len(edge_lines):
        raise ValidationError(
            f"meta.json declares {declared} undirected edges but edges.txt "
            f"has {len(edge_lines)} records"
        )
    edges = np.empty((len(edge_lines), 2), dtype=np.int64)
    seen = set()
    for i, line in enumerate(edge_lines):
        parts = line.split()
        if len(parts) != 2:
            raise ValidationError(f"edges.txt line {i + 1}: malformed record {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValidationError(f"edges.txt line {i + 1}: not integers: {line!r}")
        if not (0 <= u < n and 0 <= v < n):
            raise ValidationError(
                f"edges.txt line {i + 1}: endpoint outside [0, {n}): {line!r}"
            )
        if u >= v:
            raise ValidationError(
                f"edges.txt line {i + 1}: requires u < v, got {line!r}"
            )
        if (u, v) in seen:
            raise ValidationError(f"edges.txt line {i + 1}: duplicate edge {line!r}")
        seen.add((u, v))
        edges[i] = (u, v)

    splits_meta = meta["splits"]
    for part in ("train", "val", "test"):
        if part not in splits_meta:
            raise ValidationError(f"meta.json splits is missing {part!r}")
        arr = np.asarray(splits_meta[part], dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValidationError(f"split {part!r} contains an out-of-range index")

    graph = Graph(features=features, labels=labels, edges=edges, num_classes=c)
    splits = SplitIndices(
        train=np.asarray(splits_meta["train"], dtype=np.int64),
        val=np.asarray(splits_meta["val"], dtype=np.int64),
        test=np.asarray(splits_meta["test"], dtype=np.int64),
    )
    return DatasetBundle(
        graph=graph,
        splits=splits,
        name=str(meta["name"]),
        format_version=int(meta["format_version"]),
    )


def generate_synthetic(
    num_nodes: int,
    num_features: int,
    num_classes: int,
    p_intra: float,
    p_inter: float,
    label_signal: float,
    seed: int,
    name: str = "synthetic",
) -> DatasetBundle:
    """Stochastic block model with class-conditional Gaussian features.

    Nodes get balanced class labels; an edge (u, v) appears with probability
    p_intra when the classes match and p_inter otherwise.  Each class mean is
    a random direction of norm ``label_signal`` on top of unit Gaussian
    noise, so large signals make the classes linearly separable.  Splits are
    class-balanced 40% train / 10% val / 50% test.
    """
    if not 0.0 <= p_inter <= p_intra <= 1.0:
        raise ValidationError("require 0 <= p_inter <= p_intra <= 1")
    if num_classes > num_nodes:
        raise ValidationError("more classes than nodes")
    if num_classes < 1 or num_features < 1 or num_nodes < 1:
        raise ValidationError("counts must be >= 1")

    rng = make_rng(seed)
    labels = rng.permutation(np.arange(num_nodes, dtype=np.int64) % num_classes)

    iu, ju = np.triu_indices(num_nodes, k=1)
    same = labels[iu] == labels[ju]
    p = np.where(same, p_intra, p_inter)
    keep = rng.random(iu.shape[0]) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64)

    means = rng.standard_normal((num_classes, num_features))
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    means = means / norms * label_signal
    features = means[labels] + rng.standard_normal((num_nodes, num_features))

    train, val, test = [], [], []
    for cls in range(num_classes):
        members = rng.permutation(np.flatnonzero(labels == cls))
        n_tr = int(round(0.4 * members.size))
        n_val = int(round(0.1 * members.size))
        train.extend(members[:n_tr])
        val.extend(members[n_tr : n_tr + n_val])
        test.extend(members[n_tr + n_val :])

    graph = Graph(
        features=features, labels=labels, edges=edges, num_classes=num_classes
    )
    splits = SplitIndices(
        train=np.array(train, np.int64),
        val=np.array(val, np.int64),
        test=np.array(test, np.int64),
    )
    return DatasetBundle(graph=graph, splits=splits, name=name)
