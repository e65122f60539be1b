"""Two-layer GCN and SGC: forward pass, analytic backprop, training loop.

The forward model is

    Z = softmax( Â · ReLU(Â X W0) · W1 )        (GCN)
    Z = softmax( Â^K X · W )                     (SGC)

with Â the symmetric-normalized self-looped adjacency.  Gradients of the
masked soft-target cross entropy are derived by hand; a finite-difference
oracle in the test suite pins them down.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError, ValidationError
from .graph import NormalizedAdjacency
from .numerics import (
    LOG_GUARD,
    AdamState,
    adam_step,
    as_dense,
    glorot_init,
    relu,
    softmax_rows,
    spmm,
)

GCN = "gcn"
SGC = "sgc"


@dataclass
class ModelConfig:
    architecture: str = GCN
    hidden_dim: int = 16
    sgc_hops: int = 2
    learning_rate: float = 0.001
    max_epochs: int = 1600
    seed: int = 0
    dropout: float = 0.0  # hidden-layer dropout, GCN only
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.architecture not in (GCN, SGC):
            raise ValidationError(f"unknown architecture: {self.architecture!r}")
        if self.hidden_dim < 1:
            raise ValidationError("hidden_dim must be >= 1")
        if self.sgc_hops < 1:
            raise ValidationError("sgc_hops must be >= 1")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")


@dataclass
class ModelParams:
    """Weight matrices in declaration order: [W0, W1] for GCN, [W] for SGC."""

    architecture: str
    weights: list
    sgc_hops: int = 2

    def copy(self) -> "ModelParams":
        return ModelParams(
            architecture=self.architecture,
            weights=[w.copy() for w in self.weights],
            sgc_hops=self.sgc_hops,
        )


def init_params(
    config: ModelConfig, num_features: int, num_classes: int, rng: np.random.Generator
) -> ModelParams:
    if config.architecture == GCN:
        weights = [
            glorot_init(num_features, config.hidden_dim, rng),
            glorot_init(config.hidden_dim, num_classes, rng),
        ]
    else:
        weights = [glorot_init(num_features, num_classes, rng)]
    return ModelParams(
        architecture=config.architecture, weights=weights, sgc_hops=config.sgc_hops
    )


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, kept for the backward pass."""

    posteriors: np.ndarray  # (n, C), row-stochastic
    logits: np.ndarray  # (n, C)
    pre_activation: np.ndarray | None = None  # (n, H) = ÂX W0, GCN only
    hidden: np.ndarray | None = None  # (n, H), after ReLU (and dropout mask)
    propagated: np.ndarray | None = None  # ÂX (GCN) or Â^K X (SGC)
    propagated_hidden: np.ndarray | None = None  # Â·hidden, GCN only
    hidden_mask: np.ndarray | None = None  # inverted-dropout scale, GCN only


def propagate_features(
    adj: NormalizedAdjacency, features: np.ndarray, hops: int = 1
) -> np.ndarray:
    """Apply Â ``hops`` times.  Hoisted out of the training loop: the result
    depends only on the graph, so one spmm pays for every epoch."""
    out = as_dense(features)
    for _ in range(hops):
        out = spmm(adj.a_hat, out)
    return out


def gcn_forward(
    adj: NormalizedAdjacency,
    features: np.ndarray,
    params: ModelParams,
    propagated: np.ndarray | None = None,
    hidden_mask: np.ndarray | None = None,
) -> ForwardCache:
    w0, w1 = params.weights
    ax = propagate_features(adj, features) if propagated is None else propagated
    if ax.shape[1] != w0.shape[0]:
        raise ShapeError(
            f"feature dim {ax.shape[1]} does not match W0 rows {w0.shape[0]}"
        )
    pre = ax @ w0
    hidden = relu(pre)
    if hidden_mask is not None:
        hidden = hidden * hidden_mask
    ah = spmm(adj.a_hat, hidden)
    logits = ah @ w1
    return ForwardCache(
        posteriors=softmax_rows(logits),
        logits=logits,
        pre_activation=pre,
        hidden=hidden,
        propagated=ax,
        propagated_hidden=ah,
        hidden_mask=hidden_mask,
    )


def sgc_forward(
    adj: NormalizedAdjacency,
    features: np.ndarray,
    params: ModelParams,
    propagated: np.ndarray | None = None,
) -> ForwardCache:
    (w,) = params.weights
    px = (
        propagate_features(adj, features, hops=params.sgc_hops)
        if propagated is None
        else propagated
    )
    if px.shape[1] != w.shape[0]:
        raise ShapeError(
            f"feature dim {px.shape[1]} does not match W rows {w.shape[0]}"
        )
    logits = px @ w
    return ForwardCache(
        posteriors=softmax_rows(logits), logits=logits, propagated=px
    )


def model_forward(
    adj: NormalizedAdjacency,
    features: np.ndarray,
    params: ModelParams,
    propagated: np.ndarray | None = None,
    hidden_mask: np.ndarray | None = None,
) -> ForwardCache:
    if params.architecture == GCN:
        return gcn_forward(adj, features, params, propagated, hidden_mask)
    return sgc_forward(adj, features, params, propagated)


@dataclass(frozen=True)
class TargetTable:
    """Per-node training targets: one-hot rows, some replaced by soft rows.

    Rows are valid only on ``labeled``; ``soft`` records which of those were
    replaced by soft distributions (the unlearning nodes, once a replacement
    method ran).
    """

    matrix: np.ndarray  # (n, C)
    labeled: np.ndarray  # sorted node indices carrying targets
    soft: np.ndarray  # sorted subset of labeled with soft rows

    def __post_init__(self):
        object.__setattr__(self, "labeled", np.sort(np.asarray(self.labeled, np.int64)))
        object.__setattr__(self, "soft", np.sort(np.asarray(self.soft, np.int64)))
        if np.setdiff1d(self.soft, self.labeled).size:
            raise ValidationError("soft target rows must be labeled nodes")
        rows = self.matrix[self.labeled]
        if rows.size:
            if np.any(rows < 0):
                raise ValidationError("target rows must be non-negative")
            sums = rows.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-9):
                bad = self.labeled[int(np.argmax(np.abs(sums - 1.0)))]
                raise ValidationError(f"target row {bad} does not sum to 1")

    @classmethod
    def one_hot(cls, labels: np.ndarray, labeled_idx, num_classes: int) -> "TargetTable":
        labels = np.asarray(labels, dtype=np.int64)
        matrix = np.zeros((labels.shape[0], num_classes))
        matrix[np.arange(labels.shape[0]), labels] = 1.0
        return cls(matrix=matrix, labeled=labeled_idx, soft=np.array([], np.int64))

    def with_soft_rows(self, indices: np.ndarray, rows: np.ndarray) -> "TargetTable":
        indices = np.asarray(indices, dtype=np.int64)
        matrix = self.matrix.copy()
        matrix[indices] = rows
        return TargetTable(
            matrix=matrix, labeled=self.labeled, soft=np.union1d(self.soft, indices)
        )


def masked_cross_entropy(
    posteriors: np.ndarray, targets: TargetTable, mask: np.ndarray
) -> float:
    """Mean over ``mask`` of -sum_f target_f * ln(Z_f + 1e-12)."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValidationError("masked_cross_entropy: empty mask")
    if np.setdiff1d(mask, targets.labeled).size:
        raise ValidationError("mask contains nodes without targets")
    z = posteriors[mask]
    t = targets.matrix[mask]
    return float(-(t * np.log(z + LOG_GUARD)).sum() / mask.size)


def _loss_gradients(
    cache: ForwardCache,
    adj: NormalizedAdjacency,
    params: ModelParams,
    targets: TargetTable,
    mask: np.ndarray,
):
    """Analytic gradients of masked_cross_entropy w.r.t. every weight matrix.

    d(loss)/d(logits) is (Z - T) / |mask| on masked rows and zero elsewhere;
    the rest is the usual chain rule through Â (symmetric) and the ReLU mask.
    """
    mask = np.asarray(mask, dtype=np.int64)
    dlogits = np.zeros_like(cache.posteriors)
    dlogits[mask] = (cache.posteriors[mask] - targets.matrix[mask]) / mask.size

    if params.architecture == SGC:
        return [cache.propagated.T @ dlogits]

    _, w1 = params.weights
    dw1 = cache.propagated_hidden.T @ dlogits
    dhidden = spmm(adj.a_hat, dlogits @ w1.T)  # Â is symmetric, so Âᵀ = Â
    if cache.hidden_mask is not None:
        dhidden = dhidden * cache.hidden_mask
    dpre = dhidden * (cache.pre_activation > 0.0)
    dw0 = cache.propagated.T @ dpre
    return [dw0, dw1]


def gcn_backward(
    cache: ForwardCache,
    adj: NormalizedAdjacency,
    params: ModelParams,
    targets: TargetTable,
    mask: np.ndarray,
):
    if params.architecture != GCN:
        raise ShapeError("gcn_backward called with non-GCN params")
    w0, w1 = params.weights
    if (
        cache.hidden is None
        or cache.hidden.shape[1] != w0.shape[1]
        or cache.posteriors.shape[1] != w1.shape[1]
    ):
        raise ShapeError("forward cache does not match these parameters")
    return _loss_gradients(cache, adj, params, targets, mask)


def sgc_backward(
    cache: ForwardCache, params: ModelParams, targets: TargetTable, mask: np.ndarray
):
    if params.architecture != SGC:
        raise ShapeError("sgc_backward called with non-SGC params")
    return _loss_gradients(cache, None, params, targets, mask)


@dataclass
class TrainReport:
    epochs_run: int
    final_loss: float
    loss_history: list = field(default_factory=list)
    wall_time: float = 0.0
    diverged_at: int | None = None


@dataclass
class StoppingRule:
    """Stop when the trailing-window mean loss stops moving.

    After epoch t >= window + 1, compare mean(loss[t-w:t]) against the same
    window shifted back by one epoch; stop when the relative change is below
    ``tol``.
    """

    window: int = 10
    tol: float = 1e-4

    def should_stop(self, history: list) -> bool:
        w = self.window
        if len(history) < w + 1:
            return False
        recent = np.mean(history[-w:])
        previous = np.mean(history[-w - 1 : -1])
        denom = max(abs(previous), 1e-300)
        return abs(recent - previous) / denom < self.tol


def optimize(
    params: ModelParams,
    adj: NormalizedAdjacency,
    features: np.ndarray,
    targets: TargetTable,
    mask: np.ndarray,
    learning_rate: float,
    max_epochs: int,
    stopping: StoppingRule | None = None,
    ascend: bool = False,
    on_divergence: str = "raise",
    dropout: float = 0.0,
    weight_decay: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Full-batch Adam loop shared by training, fine-tuning, and the inverse-
    gradient baseline (``ascend=True`` negates the gradients).

    ``on_divergence='return'`` hands back the last finite parameters instead
    of raising, recording the epoch in the report.  Dropout (GCN only) draws
    a fresh inverted mask per epoch from ``rng``.
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValidationError("optimize: empty label mask")
    if dropout > 0.0 and rng is None:
        raise ValidationError("dropout requires an rng")
    hops = params.sgc_hops if params.architecture == SGC else 1
    propagated = propagate_features(adj, features, hops=hops)

    weights = [w.copy() for w in params.weights]
    state = AdamState.for_params(weights, learning_rate=learning_rate)
    history: list = []
    last_finite = [w.copy() for w in weights]
    diverged_at = None

    start = time.perf_counter()
    for epoch in range(1, max_epochs + 1):
        current = ModelParams(params.architecture, weights, params.sgc_hops)
        hidden_mask = None
        if dropout > 0.0 and params.architecture == GCN:
            keep = rng.random((propagated.shape[0], weights[0].shape[1]))
            hidden_mask = (keep >= dropout) / (1.0 - dropout)
        cache = model_forward(adj, features, current, propagated=propagated,
                              hidden_mask=hidden_mask)
        loss = masked_cross_entropy(cache.posteriors, targets, mask)
        if not np.isfinite(loss):
            if on_divergence == "return":
                diverged_at = epoch
                weights = last_finite
                break
            raise NumericError(f"non-finite loss at epoch {epoch}")
        history.append(loss)
        last_finite = [w.copy() for w in weights]
        grads = _loss_gradients(cache, adj, current, targets, mask)
        if weight_decay > 0.0:
            grads = [g + weight_decay * w for g, w in zip(grads, weights)]
        if ascend:
            grads = [-g for g in grads]
        try:
            weights = adam_step(weights, grads, state)
        except NumericError:
            if on_divergence == "return":
                diverged_at = epoch
                weights = last_finite
                break
            raise
        if stopping is not None and stopping.should_stop(history):
            break
    wall = time.perf_counter() - start

    report = TrainReport(
        epochs_run=len(history),
        final_loss=history[-1] if history else float("nan"),
        loss_history=history,
        wall_time=wall,
        diverged_at=diverged_at,
    )
    out = ModelParams(params.architecture, weights, params.sgc_hops)
    return out, report


def train(
    graph,
    adj: NormalizedAdjacency,
    config: ModelConfig,
    rng: np.random.Generator,
    label_mask: np.ndarray,
    targets: TargetTable,
):
    """Train from a fresh Glorot init for exactly ``config.max_epochs`` epochs."""
    params = init_params(config, graph.num_features, graph.num_classes, rng)
    return optimize(
        params,
        adj,
        graph.features,
        targets,
        label_mask,
        learning_rate=config.learning_rate,
        max_epochs=config.max_epochs,
        dropout=config.dropout,
        weight_decay=config.weight_decay,
        rng=rng,
    )


def accuracy(posteriors: np.ndarray, labels: np.ndarray, idx) -> float:
    """Fraction of ``idx`` whose argmax posterior equals the label.

    np.argmax breaks ties toward the lowest class index.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("accuracy: empty index set")
    pred = np.argmax(posteriors[idx], axis=1)
    return float(np.mean(pred == np.asarray(labels)[idx]))


CHECKPOINT_FORMAT = "gnn-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path, seed: int = 0, epochs: int = 0) -> None:
    """JSON header line + little-endian float64 weight blocks, in order."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": params.architecture,
        "shapes": [list(w.shape) for w in params.weights],
        "sgc_hops": params.sgc_hops,
        "seed": int(seed),
        "epochs": int(epochs),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for w in params.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (ModelParams, header dict); raises ValidationError on damage."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"unreadable checkpoint header: {exc}") from exc
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValidationError("not a model checkpoint file")
        blob = fh.read()
    shapes = [tuple(s) for s in header["shapes"]]
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(blob) != expected:
        raise ValidationError(
            f"checkpoint weight block is {len(blob)} bytes, expected {expected}"
        )
    weights, offset = [], 0
    for shape in shapes:
        count = int(np.prod(shape))
        w = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        weights.append(np.ascontiguousarray(w.astype(np.float64)).reshape(shape))
        offset += count * 8
    params = ModelParams(
        architecture=header["architecture"],
        weights=weights,
        sgc_hops=int(header.get("sgc_hops", 2)),
    )
    return params, header
