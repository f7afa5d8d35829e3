"""Synthetic contradiction-task corpora: generation, JSONL persistence.

A task is a small weighted completion table over a private label
vocabulary. "Crossed" tasks are built so the per-position marginal
argmaxes do NOT form a valid completion: a decoder that commits every
position independently in one shot lands on an invalid combination,
while the joint table itself is perfectly consistent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import MASK_LABEL, Vocabulary, make_embedding_table
from .model import JointTableModel


class CorpusError(Exception):
    """Corpus data is malformed or generation failed."""


@dataclass(frozen=True)
class TaskSpec:
    id: str
    vocab_labels: tuple[str, ...]
    positions: int
    completions: tuple[tuple[tuple[str, ...], float], ...]  # (labels, weight)
    embedding_seed: int
    embedding_dim: int

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "vocab_labels": list(self.vocab_labels),
            "positions": self.positions,
            "completions": [
                {"labels": list(labels), "weight": weight}
                for labels, weight in self.completions
            ],
            "embedding_seed": self.embedding_seed,
            "embedding_dim": self.embedding_dim,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "TaskSpec":
        try:
            return cls(
                id=rec["id"],
                vocab_labels=tuple(rec["vocab_labels"]),
                positions=int(rec["positions"]),
                completions=tuple(
                    (tuple(c["labels"]), float(c["weight"]))
                    for c in rec["completions"]
                ),
                embedding_seed=int(rec["embedding_seed"]),
                embedding_dim=int(rec["embedding_dim"]),
            )
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"bad task record: {exc}") from exc

    def build_model(self) -> JointTableModel:
        vocab = Vocabulary(size=len(self.vocab_labels), labels=self.vocab_labels)
        comps = np.array(
            [[vocab.index_of(lbl) for lbl in labels] for labels, _ in self.completions],
            dtype=np.int64,
        )
        weights = np.array([w for _, w in self.completions])
        table = make_embedding_table(vocab, self.embedding_dim, self.embedding_seed)
        return JointTableModel(
            vocab=vocab,
            positions=tuple(range(self.positions)),
            completions=comps,
            weights=weights,
            table=table,
        )


@dataclass(frozen=True)
class CorpusParams:
    n_tasks: int
    positions: int = 2
    vocab_size: int = 33
    completions_per_task: int = 6
    crossed_marginal_fraction: float = 1.0
    seed: int = 0
    embedding_dim: int = 8

    def __post_init__(self):
        if self.n_tasks < 1 or self.positions < 1 or self.completions_per_task < 1:
            raise ValueError("counts must be positive")
        if self.vocab_size < 4:
            raise ValueError("vocab_size must be at least 4")
        if not 0.0 <= self.crossed_marginal_fraction <= 1.0:
            raise ValueError("crossed_marginal_fraction must be in [0, 1]")


def masked_marginal_argmax(comps: np.ndarray, weights: np.ndarray,
                           n_pos: int) -> np.ndarray:
    """Per-position argmax of the fully-masked marginals, ties to lowest id."""
    out = np.empty(n_pos, dtype=np.int64)
    for i in range(n_pos):
        mass: dict[int, float] = {}
        for c, w in zip(comps, weights):
            mass[int(c[i])] = mass.get(int(c[i]), 0.0) + float(w)
        out[i] = min(mass, key=lambda t: (-mass[t], t))
    return out


def _weight_argmax(comps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    order = sorted(range(len(weights)),
                   key=lambda c: (-float(weights[c]), tuple(int(t) for t in comps[c])))
    return comps[order[0]]


def _is_member(comps: np.ndarray, tokens: np.ndarray) -> bool:
    return any(np.array_equal(tokens, c) for c in comps)


def _sample_task(rng: np.random.Generator, params: CorpusParams,
                 crossed: bool) -> tuple[np.ndarray, np.ndarray] | None:
    n_tok = params.vocab_size - 1
    n_pos = params.positions
    n_comp = params.completions_per_task
    if crossed:
        # One dominant completion against a family of small completions
        # that all share one token at position 0 but disagree elsewhere.
        # Marginals then cross (the shared token wins position 0, the
        # dominant completion wins the rest) while the joint stays
        # concentrated, so the contradiction is real but resolvable.
        n_small = n_comp - 1
        need = n_pos + 1 + n_small * (n_pos - 1)
        if n_comp < 2 or need > n_tok:
            return None
        pool = rng.permutation(np.arange(1, n_tok + 1, dtype=np.int64))
        dom = pool[:n_pos]
        shared = pool[n_pos]
        rest = pool[n_pos + 1:need].reshape(n_small, n_pos - 1)
        comps = np.empty((n_comp, n_pos), dtype=np.int64)
        comps[0] = dom
        comps[1:, 0] = shared
        comps[1:, 1:] = rest
        w_dom = rng.uniform(0.42, 0.48)
        small = rng.uniform(0.8, 1.2, size=n_small)
        small *= (1.0 - w_dom) / small.sum()
        if small.max() >= w_dom:
            return None
        weights = np.concatenate(([w_dom], small))
        order = rng.permutation(n_comp)
        comps, weights = comps[order], weights[order]
    else:
        comps = rng.integers(1, n_tok + 1, size=(n_comp, n_pos), dtype=np.int64)
        if len({tuple(c) for c in comps}) != n_comp:
            return None
        weights = rng.uniform(0.05, 1.0, size=n_comp)
        weights[rng.integers(n_comp)] *= 10.0
    marg_argmax = masked_marginal_argmax(comps, weights, n_pos)
    if crossed:
        if _is_member(comps, marg_argmax):
            return None
    else:
        if not np.array_equal(marg_argmax, _weight_argmax(comps, weights)):
            return None
    return comps, weights


def generate_corpus(params: CorpusParams) -> list[TaskSpec]:
    """Deterministic corpus; first round(fraction * n) tasks are crossed."""
    rng = np.random.default_rng(params.seed)
    n_crossed = round(params.crossed_marginal_fraction * params.n_tasks)
    tasks = []
    for t in range(params.n_tasks):
        crossed = t < n_crossed
        sample = None
        for _ in range(1000):
            sample = _sample_task(rng, params, crossed)
            if sample is not None:
                break
        if sample is None:
            raise CorpusError(
                f"could not build a {'crossed' if crossed else 'benign'} task "
                f"at index {t} within 1000 attempts")
        comps, weights = sample
        task_id = f"task{t:04d}"
        labels = (MASK_LABEL,) + tuple(
            f"{task_id}-w{k}" for k in range(1, params.vocab_size))
        tasks.append(TaskSpec(
            id=task_id,
            vocab_labels=labels,
            positions=params.positions,
            completions=tuple(
                (tuple(labels[t_id] for t_id in comp), float(w))
                for comp, w in zip(comps, weights)
            ),
            embedding_seed=int(rng.integers(0, 2 ** 63, dtype=np.int64)),
            embedding_dim=params.embedding_dim,
        ))
    return tasks


def save_corpus(tasks: list[TaskSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task.to_record()) + "\n")


def load_corpus(path) -> list[TaskSpec]:
    tasks = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
            task = TaskSpec.from_record(rec)
            if task.id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate task id {task.id!r}")
            seen.add(task.id)
            tasks.append(task)
    return tasks
