"""Decoder state machine: rule order, baselines, trace invariants."""

import math

import numpy as np
import pytest

from conftest import random_joint_model
from remixdec.corpus import CorpusParams, generate_corpus
from remixdec.engine import (
    DecodeResult,
    DecoderConfig,
    confidence_parallel_decode,
    fixed_k_parallel_decode,
    remix_decode,
    sequential_greedy_decode,
)
from remixdec.model import (
    SequenceState,
    evidence_embedding,
    is_valid_completion,
    joint_argmax,
    tile_model,
)

LEGAL_TRANSITIONS = {"MM", "MT", "MC", "CC", "CT", "CM", "TT"}


class MirrorCheckingModel:
    """Wraps a model and asserts the embedding cache matches the evidence."""

    def __init__(self, inner):
        self.inner = inner
        self.table = inner.table

    @property
    def gen_length(self):
        return self.inner.gen_length

    def score(self, state):
        for ev, emb in zip(state.evidence, state.embeddings):
            np.testing.assert_allclose(
                evidence_embedding(ev, self.table), emb, atol=1e-12)
        return self.inner.score(state)


def check_trace_invariants(result: DecodeResult, config: DecoderConfig) -> None:
    assert result.steps_used == len(result.trace)
    if result.terminated_by == "normal":
        assert not np.any(result.tokens == 0)
    committed: dict[int, int] = {}
    prev_after = "M" * config.gen_length
    for rec in result.trace:
        assert rec.states_before == prev_after
        prev_after = rec.states_after
        for i, (b, a) in enumerate(zip(rec.states_before, rec.states_after)):
            assert b + a in LEGAL_TRANSITIONS, f"illegal {b}->{a} at {i}"
        decoded = {pos for pos, _ in rec.decoded_positions}
        assert decoded.isdisjoint(rec.rejected_positions)
        for pos, tok in rec.decoded_positions:
            assert pos not in committed
            committed[pos] = tok
            assert rec.states_after[pos] == "T"
        for pos in rec.rejected_positions:
            assert rec.states_before[pos] == "C"
            assert rec.divergences[pos] > config.tau_rej
        # positions past the active block stay fully masked
        for start in range(0, config.gen_length, config.block_length):
            block = rec.states_before[start:start + config.block_length]
            if any(s != "T" for s in block):
                tail = rec.states_after[start + config.block_length:]
                assert set(tail) <= {"M"}
                assert all(p < start + config.block_length for p in decoded)
                break
    for pos, tok in committed.items():
        assert result.tokens[pos] == tok


def assert_same_decode(a: DecodeResult, b: DecodeResult) -> None:
    assert np.array_equal(a.tokens, b.tokens)
    assert a.steps_used == b.steps_used
    assert a.terminated_by == b.terminated_by
    assert ([r.decoded_positions for r in a.trace]
            == [r.decoded_positions for r in b.trace])


@pytest.fixture(scope="module")
def crossed_tasks():
    return generate_corpus(CorpusParams(n_tasks=12, seed=77))


def cfg(L=2, **kw):
    kw.setdefault("block_length", L)
    return DecoderConfig(gen_length=L, **kw)


class TestRemix:
    def test_poker_valid_within_two_productive_steps(self, poker_model):
        result = remix_decode(poker_model, cfg(2), poker_model.table)
        assert result.terminated_by == "normal"
        assert is_valid_completion(poker_model, result.tokens)
        assert result.steps_used <= 2 + result.rejections

    def test_poker_passes_through_mixing_state(self, poker_model):
        result = remix_decode(poker_model, cfg(2), poker_model.table)
        assert any("C" in rec.states_after for rec in result.trace)

    def test_crossed_tasks_decode_valid(self, crossed_tasks):
        for task in crossed_tasks:
            m = task.build_model()
            result = remix_decode(m, cfg(2), m.table)
            assert is_valid_completion(m, result.tokens), task.id

    def test_tau_conf_one_decodes_one_per_step(self, crossed_tasks):
        # the threshold is never cleared, so every commit is a fallback;
        # steps match sequential even though soft evidence may steer the
        # fallback to different positions
        for task in crossed_tasks[:4]:
            m = tile_model(task.build_model(), 4)
            c = cfg(4, tau_conf=1.0)
            result = remix_decode(m, c, m.table)
            assert result.steps_used == 4
            assert all(len(r.decoded_positions) == 1 for r in result.trace)
            assert result.fallbacks == 4
            seq = sequential_greedy_decode(m, c, m.table)
            assert seq.steps_used == result.steps_used

    def test_forced_rejections_still_terminate(self, crossed_tasks):
        for task in crossed_tasks:
            m = tile_model(task.build_model(), 8)
            c = cfg(8, block_length=2, tau_rej=0.01)
            result = remix_decode(m, c, m.table)
            assert result.steps_used <= 8
            assert result.terminated_by == "normal"
            check_trace_invariants(result, c)

    def test_max_steps_exhaustion(self, poker_model):
        c = cfg(2, tau_conf=0.99, fallback_decode=False)
        result = remix_decode(poker_model, c, poker_model.table)
        assert result.terminated_by == "max_steps"
        assert result.steps_used == c.effective_max_steps == 8
        assert np.all(result.tokens == 0)

    def test_model_config_mismatch(self, poker_model):
        with pytest.raises(ValueError):
            remix_decode(poker_model, cfg(4), poker_model.table)


class TestBetaZeroEquivalence:
    def test_matches_parallel_exactly(self, crossed_tasks):
        rng = np.random.default_rng(4)
        for task in crossed_tasks:
            for L, block in ((2, 2), (4, 2), (8, 4)):
                m = tile_model(task.build_model(), L)
                c = cfg(L, block_length=block, beta=0.0,
                        tau_conf=float(rng.uniform(0.3, 0.95)),
                        tau_rej=float(rng.uniform(0.05, 0.4)))
                assert_same_decode(
                    remix_decode(m, c, m.table),
                    confidence_parallel_decode(m, c, m.table))


class TestSequential:
    def test_one_token_per_step(self, poker_model):
        m = tile_model(poker_model, 4)
        result = sequential_greedy_decode(m, cfg(4), m.table)
        assert result.steps_used == 4
        assert all(len(r.decoded_positions) == 1 for r in result.trace)

    def test_single_position_matches_remix_tau_one(self, crossed_tasks):
        # gen_length 1 needs a 1-position task
        task_models = [random_joint_model(np.random.default_rng(s), n_pos=1)
                       for s in range(5)]
        for m in task_models:
            c = cfg(1, tau_conf=1.0)
            assert_same_decode(
                sequential_greedy_decode(m, c, m.table),
                remix_decode(m, c, m.table))


class TestConfidenceParallel:
    def test_tau_zero_poker_decodes_marginal_argmax_in_one_step(self, poker_model):
        result = confidence_parallel_decode(
            poker_model, cfg(2, tau_conf=0.0), poker_model.table)
        assert result.steps_used == 1
        out = poker_model.score(
            SequenceState.initial("t", 2, poker_model.table))
        dists = out.dists.copy()
        dists[:, 0] = -1.0
        assert np.array_equal(result.tokens, dists.argmax(axis=1))

    def test_tau_zero_fails_on_crossed_tasks(self, crossed_tasks):
        for task in crossed_tasks:
            m = task.build_model()
            result = confidence_parallel_decode(m, cfg(2, tau_conf=0.0), m.table)
            assert not is_valid_completion(m, result.tokens), task.id

    def test_tau_one_equals_sequential(self, poker_model):
        m = tile_model(poker_model, 4)
        c = cfg(4, tau_conf=1.0)
        assert_same_decode(
            confidence_parallel_decode(m, c, m.table),
            sequential_greedy_decode(m, c, m.table))

    def test_steps_bounded_by_length(self, crossed_tasks):
        for task in crossed_tasks:
            m = tile_model(task.build_model(), 6)
            result = confidence_parallel_decode(m, cfg(6, block_length=2), m.table)
            assert result.steps_used <= 6


class TestFixedK:
    def test_k_one_equals_sequential(self, poker_model):
        m = tile_model(poker_model, 4)
        assert_same_decode(
            fixed_k_parallel_decode(m, cfg(4), m.table, k=1),
            sequential_greedy_decode(m, cfg(4), m.table))

    def test_k_equals_length_one_step(self, poker_model):
        m = tile_model(poker_model, 4)
        result = fixed_k_parallel_decode(m, cfg(4), m.table, k=4)
        assert result.steps_used == 1

    def test_step_arithmetic(self, poker_model):
        for L, k in ((4, 2), (8, 3), (6, 4)):
            m = tile_model(poker_model, L)
            result = fixed_k_parallel_decode(m, cfg(L), m.table, k=k)
            assert result.steps_used == math.ceil(L / k)

    def test_k_out_of_range(self, poker_model):
        with pytest.raises(ValueError):
            fixed_k_parallel_decode(poker_model, cfg(2), poker_model.table, k=3)
        with pytest.raises(ValueError):
            fixed_k_parallel_decode(poker_model, cfg(2), poker_model.table, k=0)


class TestTraceInvariants:
    @pytest.mark.parametrize("decode", [
        remix_decode, sequential_greedy_decode, confidence_parallel_decode])
    def test_randomized_runs(self, decode, crossed_tasks):
        rng = np.random.default_rng(11)
        for task in crossed_tasks:
            for L, block in ((2, 2), (8, 4), (8, 2)):
                m = tile_model(task.build_model(), L)
                c = cfg(L, block_length=block,
                        tau_conf=float(rng.uniform(0.0, 1.0)),
                        beta=float(rng.uniform(0.0, 1.0)),
                        tau_rej=float(rng.uniform(0.01, 1.0)))
                result = decode(MirrorCheckingModel(m), c, m.table)
                assert result.steps_used <= L
                check_trace_invariants(result, c)

    def test_bit_identical_determinism(self, crossed_tasks):
        for task in crossed_tasks[:4]:
            m = tile_model(task.build_model(), 8)
            c = cfg(8, block_length=4)
            a = remix_decode(m, c, m.table)
            b = remix_decode(m, c, m.table)
            assert_same_decode(a, b)
            assert ([r.states_after for r in a.trace]
                    == [r.states_after for r in b.trace])
            assert ([r.divergences for r in a.trace]
                    == [r.divergences for r in b.trace])


class TestDecoderConfigValidation:
    def test_block_must_divide(self):
        with pytest.raises(ValueError):
            DecoderConfig(gen_length=4, block_length=3)

    def test_block_not_larger_than_length(self):
        with pytest.raises(ValueError):
            DecoderConfig(gen_length=2, block_length=4)

    def test_thresholds_in_range(self):
        with pytest.raises(ValueError):
            DecoderConfig(gen_length=2, block_length=2, tau_conf=1.5)
        with pytest.raises(ValueError):
            DecoderConfig(gen_length=2, block_length=2, beta=-0.1)
        with pytest.raises(ValueError):
            DecoderConfig(gen_length=2, block_length=2, tau_rej=2.0)

    def test_default_max_steps(self):
        c = DecoderConfig(gen_length=8, block_length=4)
        assert c.effective_max_steps == 32
        assert DecoderConfig(gen_length=8, block_length=4,
                             max_steps=5).effective_max_steps == 5
