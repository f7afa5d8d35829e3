"""Foundational vocabulary and numeric types.

Distributions are plain float64 numpy arrays over the vocabulary; this
module provides their validation helpers plus the three rule-level
primitives the decoder is built from: base-2 Jensen-Shannon divergence,
confidence-adaptive nucleus truncation, and the convex mixing of token
embeddings with the mask embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import js_divergence_raw, splitmix64_unit

MASK_LABEL = "[MASK]"

NORM_ATOL = 1e-9


@dataclass(frozen=True)
class Vocabulary:
    """Finite token inventory; index 0 is always the mask token."""

    size: int
    labels: tuple[str, ...] | None = None
    mask_id: int = field(default=0, init=False)

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"vocabulary needs at least 2 tokens, got {self.size}")
        if self.labels is not None:
            if len(self.labels) != self.size:
                raise ValueError("labels length must equal vocabulary size")
            if self.labels[0] != MASK_LABEL:
                raise ValueError(f"labels[0] must be {MASK_LABEL!r}")

    def label(self, token_id: int) -> str:
        if self.labels is not None:
            return self.labels[token_id]
        return MASK_LABEL if token_id == self.mask_id else f"t{token_id}"

    def index_of(self, label: str) -> int:
        if self.labels is None:
            raise ValueError("vocabulary has no labels")
        return self.labels.index(label)


def check_distribution(p: np.ndarray, size: int) -> np.ndarray:
    """Validate and return p as a float64 probability vector of length size."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (size,):
        raise ValueError(f"distribution has shape {p.shape}, expected ({size},)")
    if np.any(p < 0.0):
        raise ValueError("distribution has negative entries")
    if abs(float(p.sum()) - 1.0) > NORM_ATOL:
        raise ValueError(f"distribution sums to {p.sum()!r}, not 1")
    return p


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Deterministic stand-in for a token embedding matrix.

    rows is (vocab size, dim); row mask_id is the mask embedding.
    Regenerating from (size, dim, seed) is bit-exact on every platform.
    """

    dim: int
    rows: np.ndarray
    seed: int
    mask_id: int = 0

    def __post_init__(self):
        self.rows.setflags(write=False)

    @property
    def vocab_size(self) -> int:
        return self.rows.shape[0]

    @property
    def mask_row(self) -> np.ndarray:
        return self.rows[self.mask_id]


def make_embedding_table(vocab: Vocabulary, dim: int, seed: int) -> EmbeddingTable:
    """Fill a (size, dim) table with splitmix64-derived values in [-1, 1)."""
    if dim < 1:
        raise ValueError(f"embedding dim must be >= 1, got {dim}")
    u = splitmix64_unit(vocab.size * dim, seed)
    rows = (2.0 * u - 1.0).reshape(vocab.size, dim)
    return EmbeddingTable(dim=dim, rows=rows, seed=seed, mask_id=vocab.mask_id)


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Base-2 Jensen-Shannon divergence; symmetric, in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(js_divergence_raw(p, q))


def adaptive_top_p(p: np.ndarray, mask_id: int = 0) -> np.ndarray:
    """Confidence-adaptive nucleus truncation with mask consolidation.

    Keeps the shortest high-probability prefix of non-mask tokens whose
    cumulative mass reaches min(2 * p_max, 0.9); everything else,
    including any mass already on the mask token, is consolidated onto
    the mask entry. Ties in the descending sort break by ascending
    token id so traces are deterministic.
    """
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    p_dyn = min(2.0 * float(p.max()), 0.9)

    ids = np.arange(n)
    nonmask = ids[ids != mask_id]
    # lexsort: primary key last -> sort by -prob, ties by ascending id
    order = nonmask[np.lexsort((nonmask, -p[nonmask]))]
    cum = np.cumsum(p[order])
    crossing = np.nonzero(cum >= p_dyn)[0]
    n_keep = int(crossing[0]) + 1 if crossing.size else order.size

    out = np.zeros(n)
    kept = order[:n_keep]
    out[kept] = p[kept]
    out[mask_id] = max(0.0, 1.0 - float(p[kept].sum()))
    return out / out.sum()


def mixing_embedding(q: np.ndarray, table: EmbeddingTable, beta: float) -> np.ndarray:
    """Convex blend beta * (q-weighted token rows) + (1 - beta) * mask row."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (table.vocab_size,):
        raise ValueError(
            f"distribution length {q.shape} does not match table size {table.vocab_size}")
    return beta * (q @ table.rows) + (1.0 - beta) * table.mask_row
