"""Command-line entry point for benchmark runs.

Credentials are read from the environment (LLM_API_KEY / LLM_BASE_URL), never
from flags. Exit code 0 means every problem completed, regardless of how many
were solved.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .bench import FORMATS, load_dataset, run_benchmark
from .core import Granularity, RunConfig


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="thoughtsearch",
        description="Search for programs by running MCTS over coding thoughts "
        "with execution-feedback repair.",
    )
    p.add_argument("--dataset", required=True, help="path to the dataset file")
    p.add_argument("--format", required=True, choices=FORMATS)
    p.add_argument("--out", default="results.jsonl", help="results JSONL path")
    p.add_argument("--limit", type=int, default=None, help="run only the first N problems")

    p.add_argument("--rollouts", type=int, default=16)
    p.add_argument("--max-children", type=int, default=3)
    p.add_argument("--c-base", type=float, default=10.0)
    p.add_argument("--c", dest="c_explore", type=float, default=4.0)
    p.add_argument("--w-test", type=float, default=0.8)
    p.add_argument("--w-llm", type=float, default=0.2)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--rethink-limit", type=int, default=1)

    p.add_argument("--no-verbal-feedback", action="store_true")
    p.add_argument("--no-block-info", action="store_true")
    p.add_argument("--no-rethink", action="store_true")
    p.add_argument("--no-self-eval", action="store_true")
    p.add_argument("--gen-tests-eval", action="store_true")
    p.add_argument("--granularity", choices=[g.value for g in Granularity], default="thought")

    p.add_argument("--backend", choices=["http", "mock", "replay"], default="mock")
    p.add_argument("--fixtures", default=None, help="replay fixtures JSON path")
    p.add_argument("--model", default="gpt-4o-mini")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--timeout-sec", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prompt-log", default=None, help="write recorded prompts to this JSONL path")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        max_rollouts=args.rollouts,
        max_children=args.max_children,
        c_base=args.c_base,
        c_explore=args.c_explore,
        w_test=args.w_test,
        w_llm=args.w_llm,
        max_depth=args.max_depth,
        rethink_limit_per_node=args.rethink_limit,
        verbal_feedback=not args.no_verbal_feedback,
        block_info=not args.no_block_info,
        rethink=not args.no_rethink,
        self_eval=not args.no_self_eval,
        gen_tests_eval=args.gen_tests_eval,
        granularity=Granularity(args.granularity),
        seed=args.seed,
        exec_timeout=args.timeout_sec,
        model_name=args.model,
        temperature=args.temperature,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ValueError as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return 2

    try:
        problems = load_dataset(args.dataset, args.format)
    except (OSError, ValueError) as exc:
        print(f"failed to load dataset: {exc}", file=sys.stderr)
        return 2
    if args.limit is not None:
        problems = problems[: args.limit]
    if not problems:
        print("dataset is empty", file=sys.stderr)
        return 2

    prompt_log = args.prompt_log
    if prompt_log is None and args.backend in ("mock", "replay"):
        prompt_log = args.out + ".prompts.jsonl"

    try:
        results, metrics = run_benchmark(
            problems,
            cfg,
            backend_choice=args.backend,
            out_path=args.out,
            fixtures_path=args.fixtures,
            prompt_log_path=prompt_log,
        )
    except (OSError, ValueError) as exc:
        print(f"benchmark failed: {exc}", file=sys.stderr)
        return 1

    solved = sum(1 for r in results if r.private_fraction == 1.0)
    print(f"{len(results)} problems, {solved} fully solved")
    print(f"pass_rate={metrics.pass_rate:.2f} pass@1={metrics.pass_at_1:.2f}")
    print(f"results written to {args.out}")
    incomplete = [r for r in results if r.error]
    for r in incomplete:
        print(f"  {r.problem_id}: {r.error}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
