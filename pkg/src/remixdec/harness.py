"""Suite runner: decoder sweeps over a corpus, metrics, traces.

Results are written as one JSON document per run: a flat list of
per-(task, decoder) records plus per-decoder summary means, in a fixed
order (task id, then decoder name) so identical inputs produce
byte-identical output files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import CorpusError, TaskSpec, load_corpus
from .engine import (
    DecodeResult,
    DecoderConfig,
    confidence_parallel_decode,
    fixed_k_parallel_decode,
    remix_decode,
    sequential_greedy_decode,
)
from .model import is_valid_completion, joint_argmax, make_linear_scorer, tile_model

DECODER_KINDS = ("remix", "sequential", "parallel", "fixed_k")

MODEL_JOINT_TABLE = "joint_table"
MODEL_LINEAR_SCORER = "linear_scorer"


@dataclass(frozen=True)
class DecoderSpec:
    name: str
    kind: str
    config: DecoderConfig
    k: int | None = None

    def __post_init__(self):
        if self.kind not in DECODER_KINDS:
            raise ValueError(f"unknown decoder kind {self.kind!r}")
        if self.kind == "fixed_k" and self.k is None:
            raise ValueError("fixed_k decoder needs k")

    def run(self, model, table) -> DecodeResult:
        if self.kind == "remix":
            return remix_decode(model, self.config, table)
        if self.kind == "sequential":
            return sequential_greedy_decode(model, self.config, table)
        if self.kind == "parallel":
            return confidence_parallel_decode(model, self.config, table)
        return fixed_k_parallel_decode(model, self.config, table, self.k)


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str
    decoders: tuple[DecoderSpec, ...]
    model_kind: str = MODEL_JOINT_TABLE
    repeats: int = 1
    output_path: str | None = None
    trace_task_ids: tuple[str, ...] = ()

    def __post_init__(self):
        names = [d.name for d in self.decoders]
        if len(set(names)) != len(names):
            raise ValueError("decoder names must be unique")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.model_kind not in (MODEL_JOINT_TABLE, MODEL_LINEAR_SCORER):
            raise ValueError(f"unknown model_kind {self.model_kind!r}")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: malformed run config: {exc}") from exc
        try:
            decoders = tuple(
                DecoderSpec(
                    name=d["name"],
                    kind=d["kind"],
                    config=DecoderConfig(**d["config"]),
                    k=d.get("k"),
                )
                for d in doc["decoders"]
            )
            return cls(
                corpus_path=doc["corpus_path"],
                decoders=decoders,
                model_kind=doc.get("model_kind", MODEL_JOINT_TABLE),
                repeats=int(doc.get("repeats", 1)),
                output_path=doc.get("output_path"),
                trace_task_ids=tuple(doc.get("trace_task_ids", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{path}: bad run config: {exc}") from exc


@dataclass
class MetricsRow:
    task_id: str
    decoder_name: str
    valid: bool
    exact_match: bool
    steps_used: int
    step_reduction: float
    rejections: int
    fallbacks: int
    terminated_by: str
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "decoder_name": self.decoder_name,
            "valid": self.valid,
            "exact_match": self.exact_match,
            "steps_used": self.steps_used,
            "step_reduction": self.step_reduction,
            "rejections": self.rejections,
            "fallbacks": self.fallbacks,
            "terminated_by": self.terminated_by,
            "error": self.error,
        }


def _results_identical(a: DecodeResult, b: DecodeResult) -> bool:
    return (np.array_equal(a.tokens, b.tokens)
            and a.steps_used == b.steps_used
            and a.terminated_by == b.terminated_by)


def _build_model(task: TaskSpec, spec: DecoderSpec, model_kind: str):
    base = task.build_model()
    oracle_model = tile_model(base, spec.config.gen_length)
    if model_kind == MODEL_LINEAR_SCORER:
        score_model = make_linear_scorer(
            base.vocab, base.table, seed=task.embedding_seed + 1,
            gen_length=spec.config.gen_length)
    else:
        score_model = oracle_model
    return score_model, oracle_model


def run_suite(config: RunConfig) -> tuple[list[MetricsRow], dict[str, DecodeResult]]:
    """Execute every (task, decoder) pair; returns rows plus requested traces."""
    tasks = load_corpus(config.corpus_path)
    rows: list[MetricsRow] = []
    traces: dict[str, DecodeResult] = {}
    for task in sorted(tasks, key=lambda t: t.id):
        for spec in sorted(config.decoders, key=lambda d: d.name):
            try:
                score_model, oracle_model = _build_model(task, spec, config.model_kind)
                result = spec.run(score_model, oracle_model.table)
                for _ in range(config.repeats - 1):
                    again = spec.run(score_model, oracle_model.table)
                    if not _results_identical(result, again):
                        raise RuntimeError("nondeterministic decode across repeats")
                oracle = joint_argmax(oracle_model)
                valid = (result.terminated_by == "normal"
                         and is_valid_completion(oracle_model, result.tokens))
                rows.append(MetricsRow(
                    task_id=task.id,
                    decoder_name=spec.name,
                    valid=bool(valid),
                    exact_match=bool(np.array_equal(result.tokens, oracle)),
                    steps_used=result.steps_used,
                    step_reduction=spec.config.gen_length / result.steps_used,
                    rejections=result.rejections,
                    fallbacks=result.fallbacks,
                    terminated_by=result.terminated_by,
                ))
                if task.id in config.trace_task_ids:
                    traces[f"{task.id}/{spec.name}"] = result
            except Exception as exc:  # noqa: BLE001 - suite must keep going
                rows.append(MetricsRow(
                    task_id=task.id, decoder_name=spec.name, valid=False,
                    exact_match=False, steps_used=0, step_reduction=0.0,
                    rejections=0, fallbacks=0, terminated_by="error",
                    error=str(exc)))
    return rows, traces


def summarize(rows: list[MetricsRow]) -> dict[str, dict]:
    summary: dict[str, dict] = {}
    for name in sorted({r.decoder_name for r in rows}):
        group = [r for r in rows if r.decoder_name == name and r.error is None]
        if not group:
            summary[name] = {"n_tasks": 0}
            continue
        summary[name] = {
            "n_tasks": len(group),
            "mean_validity": float(np.mean([r.valid for r in group])),
            "mean_exact_match": float(np.mean([r.exact_match for r in group])),
            "mean_steps": float(np.mean([r.steps_used for r in group])),
            "mean_step_reduction": float(np.mean([r.step_reduction for r in group])),
            "total_rejections": int(sum(r.rejections for r in group)),
            "total_fallbacks": int(sum(r.fallbacks for r in group)),
        }
    return summary


def results_document(rows: list[MetricsRow]) -> str:
    doc = {
        "rows": [r.to_record() for r in rows],
        "summary": summarize(rows),
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def write_results(rows: list[MetricsRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(results_document(rows))


def results_table(rows: list[MetricsRow]) -> str:
    """Human-readable per-decoder summary table."""
    summary = summarize(rows)
    header = (f"{'decoder':<16} {'tasks':>5} {'valid':>7} {'exact':>7} "
              f"{'steps':>7} {'reduct':>7} {'rej':>5} {'fb':>5}")
    lines = [header, "-" * len(header)]
    for name, s in summary.items():
        if s["n_tasks"] == 0:
            lines.append(f"{name:<16} {0:>5}")
            continue
        lines.append(
            f"{name:<16} {s['n_tasks']:>5} {s['mean_validity']:>7.3f} "
            f"{s['mean_exact_match']:>7.3f} {s['mean_steps']:>7.2f} "
            f"{s['mean_step_reduction']:>6.2f}x {s['total_rejections']:>5} "
            f"{s['total_fallbacks']:>5}")
    return "\n".join(lines) + "\n"


def render_trace(result: DecodeResult, task: TaskSpec) -> str:
    """One line per step: index, state glyphs, decodes, rejections."""
    vocab_labels = task.vocab_labels
    lines = [f"task {task.id}: {result.steps_used} steps, "
             f"terminated {result.terminated_by}"]
    for rec in result.trace:
        decoded = " ".join(
            f"{pos}:{vocab_labels[tok]}" for pos, tok in rec.decoded_positions)
        rejected = " ".join(
            f"{pos}(js={rec.divergences.get(pos, float('nan')):.4f})"
            for pos in rec.rejected_positions)
        parts = [f"step {rec.step_index:3d}", rec.states_after]
        if decoded:
            parts.append(f"decoded[{decoded}]")
        if rejected:
            parts.append(f"rejected[{rejected}]")
        if rec.fallback_position is not None:
            parts.append(f"fallback@{rec.fallback_position}")
        if rec.contradiction_flag:
            parts.append("CONTRADICTION")
        lines.append("  ".join(parts))
    final = " ".join(vocab_labels[t] for t in result.tokens)
    lines.append(f"tokens: {final}")
    return "\n".join(lines) + "\n"
