"""Read a Planetoid benchmark distribution and emit the portable dataset format.

The upstream distribution of each dataset is eight files:

    ind.<name>.x / .tx / .allx   pickled scipy CSR feature blocks
    ind.<name>.y / .ty / .ally   pickled one-hot label arrays
    ind.<name>.graph             pickled defaultdict(node -> neighbor list)
    ind.<name>.test.index        text, one permuted test node id per line

Assembly follows the conventional recipe: stack allx|tx, un-permute the test
block via test.index, patch the isolated Citeseer test nodes with zero rows,
and read edges from the neighbor dict.  Output is the four-file directory
format consumed by graph-unlearn (meta.json, features.bin, labels.txt,
edges.txt) plus a manifest with per-file checksums.
"""

from __future__ import annotations

import hashlib
import json
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class ConversionError(Exception):
    """Malformed source files or an unknown dataset name."""


# default train/val sizes of the distribution; val differs per dataset
DATASETS = {
    "cora": {"num_train": 140, "num_val": 300},
    "citeseer": {"num_train": 120, "num_val": 500},
    "pubmed": {"num_train": 60, "num_val": 500},
}

# reference statistics the three converted bundles are expected to show
EXPECTED_COUNTS = {
    "cora": {"num_nodes": 2708, "num_features": 1433, "num_classes": 7},
    "citeseer": {"num_nodes": 3327, "num_features": 3703, "num_classes": 6},
    "pubmed": {"num_nodes": 19717, "num_features": 500, "num_classes": 3},
}

_PICKLE_FILES = ("x", "y", "tx", "ty", "allx", "ally", "graph")

# only these callables may appear in the upstream pickles
_ALLOWED_GLOBALS = {
    ("numpy.core.multiarray", "_reconstruct"),
    ("numpy._core.multiarray", "_reconstruct"),
    ("numpy.core.multiarray", "scalar"),
    ("numpy._core.multiarray", "scalar"),
    ("numpy", "ndarray"),
    ("numpy", "dtype"),
    ("numpy.dtypes", "Float32DType"),
    ("numpy.dtypes", "Int32DType"),
    ("numpy.dtypes", "Int64DType"),
    ("scipy.sparse.csr", "csr_matrix"),
    ("scipy.sparse._csr", "csr_matrix"),
    ("scipy.sparse", "csr_matrix"),
    ("scipy.sparse.csc", "csc_matrix"),
    ("scipy.sparse._csc", "csc_matrix"),
    ("scipy.sparse.lil", "lil_matrix"),
    ("scipy.sparse._lil", "lil_matrix"),
    ("collections", "defaultdict"),
    ("builtins", "list"),
}


class _RestrictedUnpickler(pickle.Unpickler):
    def find_class(self, module, name):
        if (module, name) in _ALLOWED_GLOBALS:
            return super().find_class(module, name)
        raise ConversionError(
            f"refusing to unpickle {module}.{name}; not a Planetoid payload type"
        )


def _load_pickle(path: Path):
    if not path.is_file():
        raise ConversionError(f"missing source file: {path}")
    with open(path, "rb") as fh:
        return _RestrictedUnpickler(fh, encoding="latin1").load()


def _parse_test_index(path: Path) -> np.ndarray:
    if not path.is_file():
        raise ConversionError(f"missing source file: {path}")
    values = []
    for i, line in enumerate(path.read_text().splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise ConversionError(f"{path} line {i + 1}: not an index: {line!r}")
    if not values:
        raise ConversionError(f"{path} is empty")
    return np.asarray(values, dtype=np.int64)


def _to_dense(block) -> np.ndarray:
    if sp.issparse(block):
        return np.asarray(block.todense(), dtype=np.float64)
    return np.asarray(block, dtype=np.float64)


@dataclass
class ConversionManifest:
    source: str
    num_nodes: int
    num_undirected_edges: int
    num_features: int
    num_classes: int
    num_train: int
    num_val: int
    num_test: int
    checksums: dict = field(default_factory=dict)
    matches_expected: bool | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=1)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def convert(name: str, source_dir, output_dir) -> ConversionManifest:
    """Assemble one dataset and write the portable directory format."""
    if name not in DATASETS:
        raise ConversionError(
            f"unknown dataset {name!r}; expected one of {sorted(DATASETS)}"
        )
    source_dir = Path(source_dir)
    output_dir = Path(output_dir)

    blocks = {
        key: _load_pickle(source_dir / f"ind.{name}.{key}")
        for key in _PICKLE_FILES
    }
    test_index = _parse_test_index(source_dir / f"ind.{name}.test.index")

    x, y = blocks["x"], blocks["y"]
    tx, ty = blocks["tx"], blocks["ty"]
    allx, ally = blocks["allx"], blocks["ally"]
    graph = blocks["graph"]

    num_train_labeled = _to_dense(y).shape[0]
    if _to_dense(x).shape[0] != num_train_labeled:
        raise ConversionError("x and y disagree on the labeled-node count")

    allx_dense = _to_dense(allx)
    tx_dense = _to_dense(tx)
    ty_dense = _to_dense(ty)
    ally_dense = _to_dense(ally)
    if allx_dense.shape[1] != tx_dense.shape[1]:
        raise ConversionError("allx and tx disagree on the feature dimension")

    # un-permute the test block; Citeseer's index range has holes for
    # isolated nodes, which receive zero features and a class-0 label
    lo, hi = int(test_index.min()), int(test_index.max())
    span = hi - lo + 1
    num_classes = ty_dense.shape[1]
    tx_full = np.zeros((span, tx_dense.shape[1]))
    ty_full = np.zeros((span, num_classes))
    tx_full[test_index - lo] = tx_dense
    ty_full[test_index - lo] = ty_dense

    features = np.vstack([allx_dense, tx_full])
    one_hot = np.vstack([ally_dense, ty_full])
    num_nodes = features.shape[0]
    if lo != allx_dense.shape[0]:
        raise ConversionError(
            f"test indices start at {lo}, expected {allx_dense.shape[0]} "
            "(the size of allx)"
        )
    labels = np.argmax(one_hot, axis=1).astype(np.int64)

    edges = set()
    for u, nbrs in graph.items():
        u = int(u)
        if not 0 <= u < num_nodes:
            raise ConversionError(f"graph node {u} outside [0, {num_nodes})")
        for v in nbrs:
            v = int(v)
            if not 0 <= v < num_nodes:
                raise ConversionError(
                    f"graph neighbor {v} of node {u} outside [0, {num_nodes})"
                )
            if u != v:
                edges.add((min(u, v), max(u, v)))
    edge_array = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)

    num_train = DATASETS[name]["num_train"]
    num_val = DATASETS[name]["num_val"]
    if num_train != num_train_labeled:
        raise ConversionError(
            f"{name} ships {num_train_labeled} labeled training rows, "
            f"expected {num_train}"
        )
    train = np.arange(num_train, dtype=np.int64)
    val = np.arange(num_train, num_train + num_val, dtype=np.int64)
    test = np.sort(test_index)

    _write_portable(
        output_dir,
        name=name,
        features=features,
        labels=labels,
        edges=edge_array,
        num_classes=num_classes,
        train=train,
        val=val,
        test=test,
    )

    manifest = ConversionManifest(
        source=name,
        num_nodes=num_nodes,
        num_undirected_edges=int(edge_array.shape[0]),
        num_features=int(features.shape[1]),
        num_classes=int(num_classes),
        num_train=int(train.size),
        num_val=int(val.size),
        num_test=int(test.size),
        checksums={
            file: _sha256(output_dir / file)
            for file in ("meta.json", "features.bin", "labels.txt", "edges.txt")
        },
    )
    expected = EXPECTED_COUNTS[name]
    manifest.matches_expected = all(
        getattr(manifest, key) == value for key, value in expected.items()
    )
    (output_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def _write_portable(directory: Path, *, name, features, labels, edges,
                    num_classes, train, val, test) -> None:
    """Emit the graph-unlearn dataset directory format (its external
    interface): deterministic bytes, one undirected edge per line, u < v."""
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": name,
        "format_version": 1,
        "num_nodes": int(features.shape[0]),
        "num_features": int(features.shape[1]),
        "num_classes": int(num_classes),
        "num_undirected_edges": int(edges.shape[0]),
        "splits": {
            "train": train.tolist(),
            "val": val.tolist(),
            "test": test.tolist(),
        },
    }
    (directory / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    (directory / "features.bin").write_bytes(
        np.ascontiguousarray(features, dtype="<f8").tobytes()
    )
    (directory / "labels.txt").write_text("".join(f"{int(v)}\n" for v in labels))
    (directory / "edges.txt").write_text(
        "".join(f"{int(u)} {int(v)}\n" for u, v in edges)
    )
