"""Deterministic numerical kernels shared by every model in the package.

Dense matrices are C-contiguous float64 ``numpy.ndarray``s; sparse matrices
are canonical-form ``scipy.sparse.csr_matrix`` with float64 data.  All
randomness flows through ``numpy.random.Generator`` objects created by
``make_rng`` / ``derive_seed`` so that any run is reproducible from a single
64-bit seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NumericError, ShapeError

LOG_GUARD = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seeds yield identical streams."""
    return np.random.default_rng(int(seed))


def derive_seed(base_seed: int, *tokens) -> int:
    """Derive an independent 63-bit seed from a base seed and a token path.

    sha256-based, so the mapping is stable across processes and platforms
    (unlike Python's salted ``hash``).  Used to give every repetition /
    method / fraction cell of an experiment its own stream.
    """
    material = f"{int(base_seed)}|" + "|".join(str(t) for t in tokens)
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


def as_dense(m) -> np.ndarray:
    """Coerce to a 2-D float64 array without copying when already one."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def validate_csr(a: sp.csr_matrix) -> None:
    """Assert the CSR invariants: monotone offsets, sorted columns, finite data."""
    if not sp.issparse(a) or a.format != "csr":
        raise ShapeError("expected a CSR sparse matrix")
    indptr, indices = a.indptr, a.indices
    if np.any(np.diff(indptr) < 0):
        raise ShapeError("CSR row offsets must be monotone non-decreasing")
    for r in range(a.shape[0]):
        row = indices[indptr[r] : indptr[r + 1]]
        if row.size > 1 and np.any(np.diff(row) <= 0):
            raise ShapeError(f"CSR column indices not strictly increasing in row {r}")
    if not np.all(np.isfinite(a.data)):
        raise NumericError("CSR values must be finite")


def spmm(a: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """Sparse @ dense product, returned dense.

    Raises ShapeError on inner-dimension mismatch.
    """
    b = as_dense(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"spmm: inner dimensions differ ({a.shape[0]}x{a.shape[1]} @ "
            f"{b.shape[0]}x{b.shape[1]})"
        )
    return np.asarray(a @ b, dtype=np.float64)


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction so large logits cannot overflow."""
    m = as_dense(m)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def relu(m: np.ndarray) -> np.ndarray:
    return np.maximum(as_dense(m), 0.0)


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform init on [-s, s] with s = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_init: dimensions must be >= 1, got {rows}x{cols}")
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


@dataclass
class AdamState:
    """First/second-moment accumulators plus hyperparameters for Adam."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, learning_rate: float = 0.001, **kw) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kw)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(params, grads, state: AdamState):
    """One Adam update with bias correction.

    Returns the new parameter list; the moment accumulators and step counter
    in ``state`` are advanced in place (caller-owned state).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("adam_step: params/grads/state lengths differ")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(
                f"adam_step: shape mismatch param {p.shape} vs grad {g.shape}"
            )
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("adam_step: non-finite gradient")

    state.step += 1
    t = state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / (1.0 - state.beta1**t)
        v_hat = state.v[i] / (1.0 - state.beta2**t)
        out.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps))
    return out
