"""Benchmark orchestration: dataset ingestion, public/private splitting, the
per-problem run loop, and persistence of results, tree dumps and the prompt
log.

Private tests are graded once per problem, after the search, and never enter
any prompt.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .core import IoMode, ProblemSpec, RunConfig, TestCase, node_to_dict
from .evaluator import Metrics, aggregate_metrics, tree_statistics
from .gateway import HttpChatBackend, LlmGateway, MockBackend, ReplayBackend
from .sandbox import ExecStatus, Sandbox
from .search import run_search

FORMATS = ("apps", "humaneval", "generic_jsonl")


class UnknownFormat(ValueError):
    pass


class MalformedRecord(ValueError):
    def __init__(self, index: int, reason: str) -> None:
        super().__init__(f"record {index}: {reason}")
        self.index = index
        self.reason = reason


@dataclass
class RunResult:
    problem_id: str
    best_program: str
    best_reward: float
    public_fraction: float
    private_fraction: float
    rollouts_used: int
    rethinks_used: int
    wall_clock: float
    tree_dump_path: str
    error: Optional[str] = None


# --------------------------------------------------------------------------
# dataset loading


def split_tests(tests: Sequence[TestCase]) -> tuple[list[TestCase], list[TestCase]]:
    """Order-preserving even split; an odd test goes to the public side."""
    if not tests:
        raise ValueError("cannot split an empty test list")
    cut = math.ceil(len(tests) / 2)
    return list(tests[:cut]), list(tests[cut:])


def load_dataset(path: str, format: str) -> list[ProblemSpec]:
    if format not in FORMATS:
        raise UnknownFormat(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    records = list(_read_records(path))
    loader = {
        "generic_jsonl": _load_generic,
        "apps": _load_apps,
        "humaneval": _load_humaneval,
    }[format]
    return [loader(i, rec) for i, rec in enumerate(records)]


def _read_records(path: str) -> Iterable[dict]:
    with open(path) as f:
        text = f.read()
    stripped = text.strip()
    if not stripped:
        return []
    if stripped.startswith("["):  # plain JSON array export
        data = json.loads(stripped)
        if not isinstance(data, list):
            raise MalformedRecord(0, "top-level JSON must be an array")
        return data
    records = []
    for i, line in enumerate(stripped.splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise MalformedRecord(i, f"invalid JSON: {exc}") from exc
    return records


def _tests_from(raw: object, index: int, where: str) -> list[TestCase]:
    if not isinstance(raw, list):
        raise MalformedRecord(index, f"{where} must be a list")
    out = []
    for t in raw:
        if not isinstance(t, dict) or "input" not in t or "expected_output" not in t:
            raise MalformedRecord(index, f"{where} entries need input/expected_output")
        out.append(TestCase(input=str(t["input"]), expected_output=str(t["expected_output"])))
    return out


def _load_generic(index: int, rec: dict) -> ProblemSpec:
    try:
        io_mode = IoMode(rec.get("io_mode", "stdin_stdout"))
    except ValueError as exc:
        raise MalformedRecord(index, f"bad io_mode: {rec.get('io_mode')!r}") from exc
    if "id" not in rec or "statement" not in rec:
        raise MalformedRecord(index, "id and statement are required")
    spec = ProblemSpec(
        id=str(rec["id"]),
        statement=str(rec["statement"]),
        io_mode=io_mode,
        entry_point=rec.get("entry_point"),
        starter_code=rec.get("starter_code"),
        public_tests=_tests_from(rec.get("public_tests", []), index, "public_tests"),
        private_tests=_tests_from(rec.get("private_tests", []), index, "private_tests"),
    )
    if io_mode == IoMode.FUNCTIONAL and not spec.entry_point:
        raise MalformedRecord(index, "functional problems need entry_point")
    return spec


def _load_apps(index: int, rec: dict) -> ProblemSpec:
    pid = rec.get("problem_id", rec.get("id"))
    statement = rec.get("question", rec.get("statement"))
    if pid is None or statement is None:
        raise MalformedRecord(index, "apps records need problem_id and question")
    raw_io = rec.get("input_output", {})
    if isinstance(raw_io, str):
        try:
            raw_io = json.loads(raw_io) if raw_io.strip() else {}
        except json.JSONDecodeError as exc:
            raise MalformedRecord(index, f"input_output is not JSON: {exc}") from exc
    inputs = raw_io.get("inputs", [])
    outputs = raw_io.get("outputs", [])
    if len(inputs) != len(outputs):
        raise MalformedRecord(index, "inputs/outputs length mismatch")
    fn_name = raw_io.get("fn_name")
    tests = []
    for inp, out in zip(inputs, outputs):
        if fn_name:
            args = tuple(inp) if isinstance(inp, list) else (inp,)
            expected = out[0] if isinstance(out, list) and len(out) == 1 else out
            tests.append(TestCase(input=repr(args), expected_output=repr(expected)))
        else:
            tests.append(TestCase(input=_as_text(inp), expected_output=_as_text(out)))
    if not tests:
        raise MalformedRecord(index, "no test cases")
    public, private = split_tests(tests)
    return ProblemSpec(
        id=str(pid),
        statement=str(statement),
        io_mode=IoMode.FUNCTIONAL if fn_name else IoMode.STDIN_STDOUT,
        entry_point=fn_name,
        starter_code=rec.get("starter_code") or None,
        public_tests=public,
        private_tests=private,
    )


def _load_humaneval(index: int, rec: dict) -> ProblemSpec:
    pid = rec.get("task_id", rec.get("id"))
    statement = rec.get("prompt", rec.get("statement"))
    entry_point = rec.get("entry_point")
    if pid is None or statement is None:
        raise MalformedRecord(index, "humaneval records need task_id and prompt")
    if not entry_point:
        raise MalformedRecord(index, "humaneval records need entry_point")
    if "public_tests" in rec or "private_tests" in rec:
        public = _tests_from(rec.get("public_tests", []), index, "public_tests")
        private = _tests_from(rec.get("private_tests", []), index, "private_tests")
    else:
        tests = _tests_from(rec.get("tests", []), index, "tests")
        if not tests:
            raise MalformedRecord(
                index, "humaneval records need I/O pairs under tests/public_tests"
            )
        public, private = split_tests(tests)
    return ProblemSpec(
        id=str(pid),
        statement=str(statement),
        io_mode=IoMode.FUNCTIONAL,
        entry_point=str(entry_point),
        starter_code=rec.get("starter_code") or None,
        public_tests=public,
        private_tests=private,
    )


def _as_text(value: object) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, list):
        return "\n".join(_as_text(v) for v in value)
    return str(value)


# --------------------------------------------------------------------------
# backends and orchestration


def build_gateway(
    backend_choice: str,
    cfg: RunConfig,
    fixtures_path: Optional[str] = None,
    fixtures: Optional[dict] = None,
) -> LlmGateway:
    if backend_choice == "http":
        backend = HttpChatBackend()
    elif backend_choice == "mock":
        backend = MockBackend(seed=cfg.seed)
    elif backend_choice == "replay":
        if fixtures is not None:
            backend = ReplayBackend(fixtures)
        elif fixtures_path:
            backend = ReplayBackend.from_file(fixtures_path)
        else:
            raise ValueError("replay backend needs --fixtures")
    else:
        raise ValueError(f"unknown backend {backend_choice!r}")
    return LlmGateway(backend, model_name=cfg.model_name, temperature=cfg.temperature)


def grade_on_private(
    program: str, problem: ProblemSpec, cfg: RunConfig, sandbox: Sandbox
) -> float:
    if not problem.private_tests or not program:
        return 0.0
    outcomes = sandbox.execute_tests(program, problem.private_tests, problem, cfg.exec_timeout)
    return sum(1 for o in outcomes if o.status == ExecStatus.OK) / len(outcomes)


def run_benchmark(
    problems: Sequence[ProblemSpec],
    cfg: RunConfig,
    backend_choice: str = "mock",
    out_path: str = "results.jsonl",
    fixtures_path: Optional[str] = None,
    fixtures: Optional[dict] = None,
    gateway: Optional[LlmGateway] = None,
    sandbox: Optional[Sandbox] = None,
    dump_dir: Optional[str] = None,
    prompt_log_path: Optional[str] = None,
) -> tuple[list[RunResult], Metrics]:
    """Search every problem, grade best programs on the held-out tests, stream
    per-problem records to ``out_path`` and finish with a metrics record.

    Per-problem failures are recorded with reward 0 and the run continues.
    """
    if not problems:
        raise ValueError("empty dataset")
    if gateway is None:
        gateway = build_gateway(backend_choice, cfg, fixtures_path, fixtures)
    if sandbox is None:
        sandbox = Sandbox()
    if dump_dir is None:
        dump_dir = os.path.join(os.path.dirname(os.path.abspath(out_path)), "trees")
    os.makedirs(dump_dir, exist_ok=True)

    results: list[RunResult] = []
    with open(out_path, "w") as out:
        for problem in problems:
            started = time.perf_counter()
            dump_path = os.path.join(dump_dir, f"{_safe_name(problem.id)}.tree.json")
            try:
                search = run_search(problem, cfg, gateway, sandbox)
                private_fraction = grade_on_private(search.best.source, problem, cfg, sandbox)
                _write_tree_dump(dump_path, problem, search)
                result = RunResult(
                    problem_id=problem.id,
                    best_program=search.best.source,
                    best_reward=search.best.reward,
                    public_fraction=search.best.v_test,
                    private_fraction=private_fraction,
                    rollouts_used=search.rollouts_used,
                    rethinks_used=search.rethinks_used,
                    wall_clock=time.perf_counter() - started,
                    tree_dump_path=os.path.relpath(dump_path, os.path.dirname(os.path.abspath(out_path))),
                )
            except Exception as exc:  # per-problem failure: record and move on
                result = RunResult(
                    problem_id=problem.id,
                    best_program="",
                    best_reward=0.0,
                    public_fraction=0.0,
                    private_fraction=0.0,
                    rollouts_used=0,
                    rethinks_used=0,
                    wall_clock=time.perf_counter() - started,
                    tree_dump_path="",
                    error=f"{type(exc).__name__}: {exc}",
                )
            results.append(result)
            out.write(json.dumps(_result_record(result), sort_keys=True) + "\n")
            out.flush()
        metrics = aggregate_metrics([r.private_fraction for r in results])
        out.write(json.dumps(_metrics_record(metrics), sort_keys=True) + "\n")

    if prompt_log_path and gateway.recorded_prompts:
        with open(prompt_log_path, "w") as f:
            for rec in gateway.recorded_prompts:
                f.write(
                    json.dumps(
                        {
                            "prompt_class": rec.prompt_class,
                            "fingerprint": rec.fingerprint,
                            "messages": rec.messages,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    return results, metrics


def _safe_name(problem_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in problem_id)


def _write_tree_dump(path: str, problem: ProblemSpec, search) -> None:
    stats = tree_statistics(search.candidates) if search.candidates else None
    dump = {
        "problem_id": problem.id,
        "rollouts_used": search.rollouts_used,
        "rethinks_used": search.rethinks_used,
        "tree_stats": {
            "full_pass_fraction": stats.full_pass_fraction,
            "mean_v_test": stats.mean_v_test,
            "n_candidates": stats.n_candidates,
        }
        if stats
        else None,
        "tree": node_to_dict(search.tree_root),
        "events": search.events,
    }
    with open(path, "w") as f:
        json.dump(dump, f, indent=2, sort_keys=True)


def _result_record(result: RunResult) -> dict:
    return {
        "type": "result",
        "problem_id": result.problem_id,
        "best_program": result.best_program,
        "best_reward": result.best_reward,
        "public_fraction": result.public_fraction,
        "private_fraction": result.private_fraction,
        "rollouts_used": result.rollouts_used,
        "rethinks_used": result.rethinks_used,
        "wall_clock": result.wall_clock,
        "tree_dump_path": result.tree_dump_path,
        "error": result.error,
    }


def _metrics_record(metrics: Metrics) -> dict:
    return {
        "type": "metrics",
        "pass_rate": metrics.pass_rate,
        "pass_at_1": metrics.pass_at_1,
        "n_problems": metrics.n_problems,
    }


def write_results(results: Sequence[RunResult], metrics: Metrics, out_path: str) -> None:
    """One JSON record per line: every per-problem result, then the metrics."""
    with open(out_path, "w") as f:
        for r in results:
            f.write(json.dumps(_result_record(r), sort_keys=True) + "\n")
        f.write(json.dumps(_metrics_record(metrics), sort_keys=True) + "\n")


def read_results(path: str) -> tuple[list[dict], Optional[dict]]:
    """Parse a results file back into (result records, metrics record)."""
    results, metrics = [], None
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("type") == "metrics":
                metrics = rec
            else:
                results.append(rec)
    return results, metrics


def recompute_metrics(path: str) -> Metrics:
    """Offline recomputation from a results file; must equal the emitted
    metrics record."""
    results, _ = read_results(path)
    return aggregate_metrics([r["private_fraction"] for r in results])
