"""Score models and the per-position evidence they consume.

Two reference models share one interface:

* ``JointTableModel`` — an exact, enumerable joint distribution over
  valid completions. Doubles as the ground-truth oracle for validity
  and exact-match metrics.
* ``LinearScorerModel`` — a deterministic embedding-consuming scorer
  that exercises the continuous input path end to end.

The decode engine carries symbolic evidence (masked / soft / token)
alongside embeddings; each model reads whichever representation it
understands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmbeddingTable, Vocabulary, mixing_embedding
from .kernels import joint_marginals_raw, splitmix64_unit


# ---------------------------------------------------------------------------
# Evidence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Masked:
    pass


@dataclass(frozen=True, eq=False)
class Soft:
    q: np.ndarray          # mask-consolidated distribution
    beta_used: float

    def __post_init__(self):
        self.q.setflags(write=False)


@dataclass(frozen=True)
class Token:
    token_id: int


MASKED = Masked()

Evidence = Masked | Soft | Token


def evidence_embedding(ev: Evidence, table: EmbeddingTable) -> np.ndarray:
    if isinstance(ev, Token):
        return table.rows[ev.token_id]
    if isinstance(ev, Soft):
        return mixing_embedding(ev.q, table, ev.beta_used)
    return table.mask_row


@dataclass
class SequenceState:
    """Decode-time view of the response: evidence plus mirrored embeddings."""

    prompt_id: str
    evidence: list[Evidence]
    embeddings: np.ndarray   # (L, dim)

    def __len__(self) -> int:
        return len(self.evidence)

    @classmethod
    def initial(cls, prompt_id: str, length: int, table: EmbeddingTable) -> "SequenceState":
        return cls(
            prompt_id=prompt_id,
            evidence=[MASKED] * length,
            embeddings=np.tile(table.mask_row, (length, 1)),
        )


@dataclass
class ModelOutput:
    dists: np.ndarray          # (L, vocab)
    contradiction: bool = False


# ---------------------------------------------------------------------------
# Exact enumeration model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JointTableModel:
    """Weighted table of valid completions over a contiguous position range."""

    vocab: Vocabulary
    positions: tuple[int, ...]
    completions: np.ndarray    # (n_comp, n_pos) token ids, no mask
    weights: np.ndarray        # (n_comp,) positive
    table: EmbeddingTable

    def __post_init__(self):
        n_pos = len(self.positions)
        if list(self.positions) != list(range(self.positions[0], self.positions[0] + n_pos)):
            raise ValueError("positions must be contiguous")
        if self.completions.ndim != 2 or self.completions.shape[1] != n_pos:
            raise ValueError("completions must be (n_comp, n_pos)")
        if self.completions.shape[0] == 0:
            raise ValueError("need at least one completion")
        if np.any(self.completions == self.vocab.mask_id):
            raise ValueError("completions must not contain the mask token")
        if np.any(self.weights <= 0.0):
            raise ValueError("completion weights must be positive")
        self.completions.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def gen_length(self) -> int:
        return len(self.positions)

    def _likelihoods(self, evidence) -> np.ndarray:
        """Per-position token likelihood rows under the current evidence."""
        v = self.vocab.size
        n_eff = v - 1  # non-mask tokens
        lik = np.ones((len(evidence), v))
        for j, ev in enumerate(evidence):
            if isinstance(ev, Token):
                row = np.zeros(v)
                row[ev.token_id] = 1.0
                lik[j] = row
            elif isinstance(ev, Soft) and ev.beta_used != 0.0:
                lik[j] = ev.beta_used * ev.q + (1.0 - ev.beta_used) / n_eff
            # Masked, and Soft with beta 0, keep the uninformative row of
            # ones so the beta=0 path is bit-identical to Masked.
        return lik

    def score(self, state: SequenceState) -> ModelOutput:
        if len(state) != self.gen_length:
            raise ValueError(
                f"state length {len(state)} does not cover model positions {self.gen_length}")
        lik = self._likelihoods(state.evidence)
        marg = joint_marginals_raw(self.completions, self.weights, lik)
        sums = marg.sum(axis=1)
        contradiction = bool(np.any(sums == 0.0))
        dists = np.empty_like(marg)
        for i in range(marg.shape[0]):
            if sums[i] == 0.0:
                # contradictory hard evidence: keep stepping on a flat prior
                dists[i] = 1.0 / (self.vocab.size - 1)
                dists[i, self.vocab.mask_id] = 0.0
            else:
                dists[i] = marg[i] / sums[i]
        return ModelOutput(dists=dists, contradiction=contradiction)


def joint_argmax(model: "JointTableModel | TiledJointTableModel") -> np.ndarray:
    """Maximum-weight completion, ties broken lexicographically by token id."""
    if isinstance(model, TiledJointTableModel):
        base = joint_argmax(model.base)
        return np.tile(base, model.repeats)
    best = None
    for tokens, w in zip(model.completions, model.weights):
        key = (-float(w), tuple(int(t) for t in tokens))
        if best is None or key < best[0]:
            best = (key, tokens)
    return np.array(best[1], dtype=np.int64)


def is_valid_completion(model: "JointTableModel | TiledJointTableModel",
                        tokens: np.ndarray) -> bool:
    tokens = np.asarray(tokens)
    if isinstance(model, TiledJointTableModel):
        p = model.base.gen_length
        if tokens.shape[0] != p * model.repeats:
            raise ValueError("token length does not match tiled coverage")
        return all(
            is_valid_completion(model.base, tokens[g * p:(g + 1) * p])
            for g in range(model.repeats))
    if tokens.shape[0] != model.gen_length:
        raise ValueError("token length does not match model coverage")
    return any(np.array_equal(tokens, c) for c in model.completions)


@dataclass(frozen=True)
class TiledJointTableModel:
    """Independent repeats of one completion table along the sequence.

    Groups of base.gen_length positions are scored independently; used
    to stretch a small task to a longer generation length without
    blowing up the enumeration.
    """

    base: JointTableModel
    repeats: int

    @property
    def vocab(self) -> Vocabulary:
        return self.base.vocab

    @property
    def table(self) -> EmbeddingTable:
        return self.base.table

    @property
    def gen_length(self) -> int:
        return self.base.gen_length * self.repeats

    def score(self, state: SequenceState) -> ModelOutput:
        if len(state) != self.gen_length:
            raise ValueError(
                f"state length {len(state)} does not cover tiled length {self.gen_length}")
        p = self.base.gen_length
        parts = []
        contradiction = False
        for g in range(self.repeats):
            sub = SequenceState(
                prompt_id=state.prompt_id,
                evidence=state.evidence[g * p:(g + 1) * p],
                embeddings=state.embeddings[g * p:(g + 1) * p],
            )
            out = self.base.score(sub)
            parts.append(out.dists)
            contradiction = contradiction or out.contradiction
        return ModelOutput(dists=np.concatenate(parts, axis=0), contradiction=contradiction)


def tile_model(model: JointTableModel, gen_length: int) -> "JointTableModel | TiledJointTableModel":
    if gen_length == model.gen_length:
        return model
    if gen_length % model.gen_length != 0:
        raise ValueError(
            f"gen_length {gen_length} is not a multiple of task positions {model.gen_length}")
    return TiledJointTableModel(base=model, repeats=gen_length // model.gen_length)


# ---------------------------------------------------------------------------
# Linear scorer (continuous-input plumbing exerciser)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearScorerModel:
    """Softmax over a linear readout of own + mean-context embeddings."""

    vocab: Vocabulary
    table: EmbeddingTable
    out_weights: np.ndarray    # (vocab, dim)
    bias: np.ndarray           # (vocab,)
    seed: int
    gen_length: int

    def __post_init__(self):
        self.out_weights.setflags(write=False)
        self.bias.setflags(write=False)

    def score(self, state: SequenceState) -> ModelOutput:
        if len(state) != self.gen_length:
            raise ValueError(
                f"state length {len(state)} does not match model length {self.gen_length}")
        emb = state.embeddings
        length = emb.shape[0]
        if length > 1:
            ctx = (emb.sum(axis=0)[None, :] - emb) / (length - 1)
        else:
            ctx = np.zeros_like(emb)
        logits = (emb + ctx) @ self.out_weights.T + self.bias[None, :]
        logits = logits - logits.max(axis=1, keepdims=True)
        ex = np.exp(logits)
        dists = ex / ex.sum(axis=1, keepdims=True)
        return ModelOutput(dists=dists)


def make_linear_scorer(vocab: Vocabulary, table: EmbeddingTable, seed: int,
                       gen_length: int) -> LinearScorerModel:
    """Readout weights and bias from the same splitmix64 scheme as the table."""
    n_w = vocab.size * table.dim
    u = splitmix64_unit(n_w + vocab.size, seed)
    vals = 2.0 * u - 1.0
    return LinearScorerModel(
        vocab=vocab,
        table=table,
        out_weights=vals[:n_w].reshape(vocab.size, table.dim).copy(),
        bias=vals[n_w:].copy(),
        seed=seed,
        gen_length=gen_length,
    )


def score(model, state: SequenceState) -> ModelOutput:
    """Uniform entry point over all model kinds."""
    return model.score(state)
