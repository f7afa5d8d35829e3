import numpy as np
import pytest

from remixdec.core import Vocabulary, make_embedding_table
from remixdec.model import JointTableModel, Masked, Soft, Token

POKER_LABELS = ("[MASK]", "full", "house", "two", "pair",
                "high", "card", "straight", "flush")


@pytest.fixture
def poker_model() -> JointTableModel:
    """Four equally weighted two-word completions over distinct words."""
    vocab = Vocabulary(size=len(POKER_LABELS), labels=POKER_LABELS)
    comps = np.array([
        [vocab.index_of("full"), vocab.index_of("house")],
        [vocab.index_of("two"), vocab.index_of("pair")],
        [vocab.index_of("high"), vocab.index_of("card")],
        [vocab.index_of("straight"), vocab.index_of("flush")],
    ], dtype=np.int64)
    table = make_embedding_table(vocab, dim=4, seed=11)
    return JointTableModel(
        vocab=vocab,
        positions=(0, 1),
        completions=comps,
        weights=np.ones(4),
        table=table,
    )


def brute_force_marginals(model: JointTableModel, evidence) -> np.ndarray:
    """Independent enumeration of the evidence-conditioned marginals.

    Deliberately written as plain python loops over completion atoms,
    with the likelihood evaluated term by term; shares no code with the
    production marginalizer.
    """
    v = model.vocab.size
    n_pos = model.gen_length

    def lik(j, token):
        ev = evidence[j]
        if isinstance(ev, Token):
            return 1.0 if token == ev.token_id else 0.0
        if isinstance(ev, Soft) and ev.beta_used != 0.0:
            return ev.beta_used * ev.q[token] + (1.0 - ev.beta_used) / (v - 1)
        return 1.0

    marg = np.zeros((n_pos, v))
    for comp, weight in zip(model.completions, model.weights):
        for i in range(n_pos):
            prob = float(weight)
            for j in range(n_pos):
                if j != i:
                    prob *= lik(j, int(comp[j]))
            marg[i, int(comp[i])] += prob
    sums = marg.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        out = np.where(sums > 0, marg / np.where(sums > 0, sums, 1.0), 0.0)
    return out


def random_joint_model(rng: np.random.Generator, n_pos=2, vocab_size=9,
                       n_comp=5, dim=4) -> JointTableModel:
    vocab = Vocabulary(size=vocab_size)
    while True:
        comps = rng.integers(1, vocab_size, size=(n_comp, n_pos), dtype=np.int64)
        if len({tuple(c) for c in comps}) == n_comp:
            break
    weights = rng.uniform(0.1, 2.0, size=n_comp)
    table = make_embedding_table(vocab, dim=dim, seed=int(rng.integers(1 << 31)))
    return JointTableModel(vocab=vocab, positions=tuple(range(n_pos)),
                           completions=comps, weights=weights, table=table)


def random_evidence(rng: np.random.Generator, model: JointTableModel):
    from remixdec.core import adaptive_top_p
    from remixdec.model import MASKED

    evidence = []
    for _ in range(model.gen_length):
        kind = rng.integers(3)
        if kind == 0:
            evidence.append(MASKED)
        elif kind == 1:
            tok = int(model.completions[rng.integers(len(model.completions)), 0])
            evidence.append(Token(tok))
        else:
            raw = rng.dirichlet(np.ones(model.vocab.size - 1))
            p = np.concatenate(([0.0], raw))
            q = adaptive_top_p(p, model.vocab.mask_id)
            evidence.append(Soft(q=q, beta_used=float(rng.uniform(0, 1))))
    return evidence
