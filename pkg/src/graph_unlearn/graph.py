"""Graph container, symmetric adjacency normalization, and split bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError


def _as_index_array(idx) -> np.ndarray:
    return np.unique(np.asarray(idx, dtype=np.int64).ravel())


@dataclass(frozen=True)
class Graph:
    """An undirected node-classification dataset: features X, labels Y, edges A.

    Edges are stored once each as (u, v) rows with u < v; no self-loops.
    """

    features: np.ndarray  # (num_nodes, num_features) float64
    labels: np.ndarray  # (num_nodes,) int64 in [0, num_classes)
    edges: np.ndarray  # (num_edges, 2) int64, u < v
    num_classes: int

    def __post_init__(self):
        object.__setattr__(
            self, "features", np.ascontiguousarray(self.features, dtype=np.float64)
        )
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        # canonical order: u < v within a row, rows sorted lexicographically
        edges = np.sort(edges, axis=1)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        object.__setattr__(self, "edges", edges[order])
        self.validate()

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        n = self.num_nodes
        if self.labels.shape != (n,):
            raise ValidationError(
                f"labels shape {self.labels.shape} does not match {n} nodes"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain non-finite entries")
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1")
        bad = np.flatnonzero((self.labels < 0) | (self.labels >= self.num_classes))
        if bad.size:
            raise ValidationError(
                f"label out of range at node {bad[0]}: {self.labels[bad[0]]} "
                f"(num_classes={self.num_classes})"
            )
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= n:
                bad_rows = np.flatnonzero(
                    ((self.edges < 0) | (self.edges >= n)).any(axis=1)
                )
                raise ValidationError(
                    f"edge endpoint out of range at record {bad_rows[0]}: "
                    f"{tuple(self.edges[bad_rows[0]])}"
                )
            loops = np.flatnonzero(self.edges[:, 0] == self.edges[:, 1])
            if loops.size:
                raise ValidationError(
                    f"self-loop at edge record {loops[0]}: {tuple(self.edges[loops[0]])}"
                )
            uniq = np.unique(self.edges, axis=0)
            if uniq.shape[0] != self.edges.shape[0]:
                raise ValidationError("duplicate undirected edge in edge list")


@dataclass(frozen=True)
class SplitIndices:
    """Train/val/test partition plus the merged / unlearning bookkeeping.

    ``labeled`` is filled by merge_train_val; ``unlearning``/``retained`` by
    sample_unlearning_set.  All index arrays are sorted and deduplicated.
    """

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    labeled: np.ndarray | None = None
    unlearning: np.ndarray | None = None
    retained: np.ndarray | None = None

    def __post_init__(self):
        for name in ("train", "val", "test", "labeled", "unlearning", "retained"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _as_index_array(value))
        self.validate()

    def validate(self) -> None:
        for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
            inter = np.intersect1d(getattr(self, a), getattr(self, b))
            if inter.size:
                raise ValidationError(f"{a} and {b} overlap at node {inter[0]}")
        if self.labeled is not None:
            merged = np.union1d(self.train, self.val)
            if not np.array_equal(self.labeled, merged):
                raise ValidationError("labeled set must equal train ∪ val")
        if self.unlearning is not None or self.retained is not None:
            if self.labeled is None:
                raise ValidationError("unlearning split requires a merged labeled set")
            unl = self.unlearning if self.unlearning is not None else np.array([], np.int64)
            ret = self.retained if self.retained is not None else np.array([], np.int64)
            if np.intersect1d(unl, ret).size:
                raise ValidationError("retained and unlearning sets overlap")
            if not np.array_equal(np.union1d(unl, ret), self.labeled):
                raise ValidationError("retained ∪ unlearning must equal labeled")


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Propagation operator: a_hat = D̃^{-1/2} (A + I) D̃^{-1/2}.

    ``a_raw`` keeps the self-loop-free structure for neighbor queries.
    """

    a_hat: sp.csr_matrix
    a_raw: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return self.a_hat.shape[0]


def build_adjacency(graph: Graph) -> NormalizedAdjacency:
    """Symmetrize the edge list, add self-loops, and degree-normalize.

    The (i, j) entry is computed as inv_sqrt_deg[i] * inv_sqrt_deg[j], which
    is bitwise symmetric.
    """
    n = graph.num_nodes
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    ones = np.ones(u.shape[0], dtype=np.float64)
    a_raw = sp.coo_matrix(
        (np.concatenate([ones, ones]), (np.concatenate([u, v]), np.concatenate([v, u]))),
        shape=(n, n),
    ).tocsr()
    a_raw.sort_indices()

    # degree of A + I
    deg = np.asarray(a_raw.sum(axis=1)).ravel() + 1.0

    rows = np.concatenate([u, v, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([v, u, np.arange(n, dtype=np.int64)])
    # product inside the sqrt keeps hand cases like 1/sqrt(2*3) bit-exact
    vals = 1.0 / np.sqrt(deg[rows] * deg[cols])
    a_hat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a_hat.sort_indices()
    return NormalizedAdjacency(a_hat=a_hat, a_raw=a_raw)


def neighbors(adj: NormalizedAdjacency, v: int) -> np.ndarray:
    """Sorted 1-hop neighbors of v in the raw (self-loop-free) adjacency."""
    n = adj.num_nodes
    v = int(v)
    if not 0 <= v < n:
        raise IndexError(f"node {v} out of range [0, {n})")
    a = adj.a_raw
    return np.array(a.indices[a.indptr[v] : a.indptr[v + 1]], dtype=np.int64)


def merge_train_val(splits: SplitIndices) -> SplitIndices:
    """Merge the validation nodes into the labeled training pool."""
    if np.intersect1d(splits.train, splits.val).size:
        raise ValidationError("train and val overlap; cannot merge")
    return replace(splits, labeled=np.union1d(splits.train, splits.val))


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_unlearning_set(
    splits: SplitIndices, fraction: float, rng: np.random.Generator
) -> SplitIndices:
    """Draw round(fraction * |labeled|) labeled nodes uniformly, without replacement."""
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"unlearning fraction must lie in (0, 1), got {fraction}")
    if splits.labeled is None or splits.labeled.size == 0:
        raise ValidationError("labeled set is empty; merge train/val first")
    labeled = splits.labeled
    k = _round_half_away(fraction * labeled.size)
    unlearning = np.sort(rng.choice(labeled, size=k, replace=False))
    retained = np.setdiff1d(labeled, unlearning)
    return replace(splits, unlearning=unlearning, retained=retained)
