"""Command-line interface.

Subcommands:
    generate  build a seeded synthetic corpus (JSONL)
    run       execute a decoder suite from a JSON run config
    trace     decode one task verbosely and print its step trace
    bench     time the numba and numpy kernel backends against each other

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import sys
import time

from .corpus import CorpusError, CorpusParams, generate_corpus, load_corpus, save_corpus
from .engine import DecoderConfig
from .harness import (
    DecoderSpec,
    RunConfig,
    render_trace,
    results_table,
    run_suite,
    write_results,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_decoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-conf", type=float, default=0.8)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--tau-rej", type=float, default=0.3)
    p.add_argument("--gen-length", type=int, default=None,
                   help="response length; defaults to the task's position count")
    p.add_argument("--block-length", type=int, default=None,
                   help="defaults to gen-length (one block)")
    p.add_argument("--no-fallback", action="store_true",
                   help="disable the guaranteed per-step fallback commit")


def _decoder_config(args, positions: int) -> DecoderConfig:
    gen_length = args.gen_length or positions
    return DecoderConfig(
        gen_length=gen_length,
        block_length=args.block_length or gen_length,
        tau_conf=args.tau_conf,
        beta=args.beta,
        tau_rej=args.tau_rej,
        fallback_decode=not args.no_fallback,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="remixdec")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic corpus")
    gen.add_argument("--n-tasks", type=int, required=True)
    gen.add_argument("--positions", type=int, default=2)
    gen.add_argument("--vocab-size", type=int, default=33)
    gen.add_argument("--completions-per-task", type=int, default=6)
    gen.add_argument("--crossed-fraction", type=float, default=1.0)
    gen.add_argument("--embedding-dim", type=int, default=8)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    run = sub.add_parser("run", help="run a decoder suite from a config file")
    run.add_argument("--config", required=True, help="JSON run config path")
    run.add_argument("--out", default=None, help="override output_path")

    trace = sub.add_parser("trace", help="trace one task under one decoder")
    trace.add_argument("--corpus", required=True)
    trace.add_argument("--task-id", required=True)
    trace.add_argument("--decoder", choices=("remix", "sequential", "parallel", "fixed_k"),
                       default="remix")
    trace.add_argument("--k", type=int, default=1, help="k for fixed_k")
    _add_decoder_flags(trace)

    bench = sub.add_parser("bench", help="compare numba and numpy kernel backends")
    bench.add_argument("--n-tasks", type=int, default=20)
    bench.add_argument("--gen-length", type=int, default=16)
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_generate(args) -> int:
    params = CorpusParams(
        n_tasks=args.n_tasks,
        positions=args.positions,
        vocab_size=args.vocab_size,
        completions_per_task=args.completions_per_task,
        crossed_marginal_fraction=args.crossed_fraction,
        seed=args.seed,
        embedding_dim=args.embedding_dim,
    )
    tasks = generate_corpus(params)
    save_corpus(tasks, args.out)
    print(f"wrote {len(tasks)} tasks to {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = RunConfig.from_file(args.config)
    rows, traces = run_suite(config)
    out_path = args.out or config.output_path
    if out_path:
        write_results(rows, out_path)
        print(f"wrote {len(rows)} rows to {out_path}")
    tasks = {t.id: t for t in load_corpus(config.corpus_path)}
    for key, result in sorted(traces.items()):
        task_id = key.split("/")[0]
        print(f"--- trace {key} ---")
        print(render_trace(result, tasks[task_id]), end="")
    print(results_table(rows), end="")
    return 0


def _cmd_trace(args) -> int:
    tasks = {t.id: t for t in load_corpus(args.corpus)}
    if args.task_id not in tasks:
        raise CorpusError(f"task id {args.task_id!r} not found in {args.corpus}")
    task = tasks[args.task_id]
    config = _decoder_config(args, task.positions)
    spec = DecoderSpec(name=args.decoder, kind=args.decoder, config=config,
                       k=args.k if args.decoder == "fixed_k" else None)
    from .model import tile_model

    model = tile_model(task.build_model(), config.gen_length)
    result = spec.run(model, model.table)
    print(render_trace(result, task), end="")
    return 0


def _cmd_bench(args) -> int:
    # each backend runs in a fresh interpreter so REMIXDEC_BACKEND takes
    # effect through the normal import-time selection
    import os
    import subprocess

    from .kernels import NUMBA_AVAILABLE

    backends = ["numba", "numpy"] if NUMBA_AVAILABLE else ["numpy"]
    if len(backends) == 1:
        print("numba not available; timing numpy backend only", file=sys.stderr)
    print(f"{'backend':<8} {'decode total (s)':>18} {'per task (ms)':>15}")
    for backend in backends:
        env = dict(os.environ, REMIXDEC_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, "-m", "remixdec._bench",
             str(args.n_tasks), str(args.gen_length), str(args.repeats),
             str(args.seed)],
            env=env, capture_output=True, text=True, check=True)
        best = float(proc.stdout.strip())
        print(f"{backend:<8} {best:>18.4f} {1000 * best / args.n_tasks:>15.3f}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "run": _cmd_run,
        "trace": _cmd_trace,
        "bench": _cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except CorpusError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
