"""Decoding state machine: the rejection-mixing decoder and its baselines.

All decoders share one driver skeleton: semi-autoregressive blocks are
processed strictly left to right, one model forward pass per step, and
a fallback commit of the single most confident undecided position when
a step would otherwise make no progress (this bounds steps by the
generation length). The efficiency metric is the forward-pass count;
there is no wall-clock modeling here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmbeddingTable, adaptive_top_p, js_divergence
from .model import (
    MASKED,
    ModelOutput,
    SequenceState,
    Soft,
    Token,
    evidence_embedding,
)

STATE_M = "M"
STATE_C = "C"
STATE_T = "T"

TERMINATED_NORMAL = "normal"
TERMINATED_MAX_STEPS = "max_steps"


@dataclass(frozen=True)
class DecoderConfig:
    gen_length: int
    block_length: int
    tau_conf: float = 0.8
    beta: float = 0.5
    tau_rej: float = 0.3
    max_steps: int | None = None
    fallback_decode: bool = True

    def __post_init__(self):
        if not 0.0 <= self.tau_conf <= 1.0:
            raise ValueError(f"tau_conf must be in [0, 1], got {self.tau_conf}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not 0.0 <= self.tau_rej <= 1.0:
            raise ValueError(f"tau_rej must be in [0, 1], got {self.tau_rej}")
        if self.gen_length < 1 or self.block_length < 1:
            raise ValueError("gen_length and block_length must be positive")
        if self.block_length > self.gen_length or self.gen_length % self.block_length:
            raise ValueError(
                f"block_length {self.block_length} must divide gen_length {self.gen_length}")

    @property
    def effective_max_steps(self) -> int:
        # safety net, mainly for fallback_decode=False experiments
        return self.max_steps if self.max_steps is not None else 4 * self.gen_length


@dataclass
class StepRecord:
    step_index: int
    states_before: str
    states_after: str
    decoded_positions: list[tuple[int, int]]
    rejected_positions: list[int]
    divergences: dict[int, float]
    contradiction_flag: bool
    fallback_position: int | None = None


@dataclass
class DecodeResult:
    tokens: np.ndarray
    steps_used: int
    trace: list[StepRecord]
    terminated_by: str

    @property
    def rejections(self) -> int:
        return sum(len(r.rejected_positions) for r in self.trace)

    @property
    def fallbacks(self) -> int:
        return sum(1 for r in self.trace if r.fallback_position is not None)


class _Session:
    """Mutable per-decode bookkeeping shared by all decoder variants."""

    def __init__(self, model, config: DecoderConfig, table: EmbeddingTable):
        if getattr(model, "gen_length") != config.gen_length:
            raise ValueError(
                f"model covers {model.gen_length} positions, config.gen_length is {config.gen_length}")
        self.model = model
        self.config = config
        self.table = table
        self.mask_id = table.mask_id
        L = config.gen_length
        self.state = SequenceState.initial("decode", L, table)
        self.states = [STATE_M] * L
        self.tokens = np.full(L, self.mask_id, dtype=np.int64)
        self.p_old: np.ndarray | None = None
        self.trace: list[StepRecord] = []

    def active_block(self) -> range | None:
        cfg = self.config
        for start in range(0, cfg.gen_length, cfg.block_length):
            block = range(start, start + cfg.block_length)
            if any(self.states[i] != STATE_T for i in block):
                return block
        return None

    def confidences(self, out: ModelOutput) -> tuple[np.ndarray, np.ndarray]:
        """Per-position max prob and argmax over non-mask tokens."""
        dists = out.dists.copy()
        dists[:, self.mask_id] = -1.0
        return dists.max(axis=1), dists.argmax(axis=1)

    def commit(self, i: int, token_id: int) -> None:
        self.states[i] = STATE_T
        self.tokens[i] = token_id
        self.state.evidence[i] = Token(int(token_id))
        self.state.embeddings[i] = self.table.rows[token_id]

    def reset_to_mask(self, i: int) -> None:
        self.states[i] = STATE_M
        self.state.evidence[i] = MASKED
        self.state.embeddings[i] = self.table.mask_row

    def enter_soft(self, i: int, dist: np.ndarray, beta: float) -> None:
        q = adaptive_top_p(dist, self.mask_id)
        ev = Soft(q=q, beta_used=beta)
        self.states[i] = STATE_C
        self.state.evidence[i] = ev
        self.state.embeddings[i] = evidence_embedding(ev, self.table)

    def undecided(self, block: range) -> list[int]:
        return [i for i in block if self.states[i] != STATE_T]

    def finish(self) -> DecodeResult:
        done = all(s == STATE_T for s in self.states)
        return DecodeResult(
            tokens=self.tokens,
            steps_used=len(self.trace),
            trace=self.trace,
            terminated_by=TERMINATED_NORMAL if done else TERMINATED_MAX_STEPS,
        )


def _run(model, config: DecoderConfig, table: EmbeddingTable, step_fn) -> DecodeResult:
    """Drive step_fn(session, out, block, record) until done or step budget."""
    sess = _Session(model, config, table)
    while len(sess.trace) < config.effective_max_steps:
        block = sess.active_block()
        if block is None:
            break
        out = sess.model.score(sess.state)
        record = StepRecord(
            step_index=len(sess.trace),
            states_before="".join(sess.states),
            states_after="",
            decoded_positions=[],
            rejected_positions=[],
            divergences={},
            contradiction_flag=out.contradiction,
        )
        step_fn(sess, out, block, record)
        sess.p_old = out.dists
        record.states_after = "".join(sess.states)
        sess.trace.append(record)
    return sess.finish()


def _fallback(sess: _Session, out: ModelOutput, block: range, record: StepRecord) -> None:
    """Commit the single most confident undecided in-block position."""
    conf, arg = sess.confidences(out)
    cand = sess.undecided(block)
    best = max(cand, key=lambda i: (conf[i], -i))
    sess.commit(best, arg[best])
    if best in record.rejected_positions:
        # the net effect of reject-then-fallback-commit is a plain commit
        record.rejected_positions.remove(best)
    record.decoded_positions.append((best, int(arg[best])))
    record.fallback_position = best


def remix_decode(model, config: DecoderConfig, table: EmbeddingTable) -> DecodeResult:
    """Three-state decode: threshold commit, divergence rejection, soft mixing.

    Per undecided in-block position the rules apply in fixed order:
    commit the argmax token when its probability exceeds tau_conf;
    otherwise reset a mixing-state position to masked when its output
    distribution moved more than tau_rej (base-2 JS) since the previous
    step; otherwise (re-)enter the mixing state with the truncated
    distribution blended into the embedding at ratio beta.
    """

    def step(sess: _Session, out: ModelOutput, block: range, record: StepRecord) -> None:
        conf, arg = sess.confidences(out)
        decoded_any = False
        for i in sess.undecided(block):
            if conf[i] > sess.config.tau_conf:
                sess.commit(i, arg[i])
                record.decoded_positions.append((i, int(arg[i])))
                decoded_any = True
                continue
            if sess.states[i] == STATE_C and sess.p_old is not None:
                div = js_divergence(out.dists[i], sess.p_old[i])
                record.divergences[i] = div
                if div > sess.config.tau_rej:
                    sess.reset_to_mask(i)
                    record.rejected_positions.append(i)
                    continue
            sess.enter_soft(i, out.dists[i], sess.config.beta)
        if not decoded_any and sess.config.fallback_decode:
            _fallback(sess, out, block, record)

    return _run(model, config, table, step)


def sequential_greedy_decode(model, config: DecoderConfig,
                             table: EmbeddingTable) -> DecodeResult:
    """One token per step: always the most confident undecided position."""

    def step(sess: _Session, out: ModelOutput, block: range, record: StepRecord) -> None:
        conf, arg = sess.confidences(out)
        cand = sess.undecided(block)
        best = max(cand, key=lambda i: (conf[i], -i))
        sess.commit(best, arg[best])
        record.decoded_positions.append((best, int(arg[best])))

    return _run(model, config, table, step)


def confidence_parallel_decode(model, config: DecoderConfig,
                               table: EmbeddingTable) -> DecodeResult:
    """Decode every in-block position above tau_conf; no mixing state."""

    def step(sess: _Session, out: ModelOutput, block: range, record: StepRecord) -> None:
        conf, arg = sess.confidences(out)
        decoded_any = False
        for i in sess.undecided(block):
            if conf[i] > sess.config.tau_conf:
                sess.commit(i, arg[i])
                record.decoded_positions.append((i, int(arg[i])))
                decoded_any = True
        if not decoded_any and sess.config.fallback_decode:
            _fallback(sess, out, block, record)

    return _run(model, config, table, step)


def fixed_k_parallel_decode(model, config: DecoderConfig, table: EmbeddingTable,
                            k: int) -> DecodeResult:
    """Decode the k most confident undecided in-block positions per step."""
    if not 1 <= k <= config.block_length:
        raise ValueError(f"k must be in [1, block_length], got {k}")

    def step(sess: _Session, out: ModelOutput, block: range, record: StepRecord) -> None:
        conf, arg = sess.confidences(out)
        cand = sess.undecided(block)
        chosen = sorted(cand, key=lambda i: (-conf[i], i))[:k]
        for i in sorted(chosen):
            sess.commit(i, arg[i])
            record.decoded_positions.append((i, int(arg[i])))

    return _run(model, config, table, step)
