"""Turns raw execution results into the scalar dual reward and the verbal
feedback object; computes benchmark metrics and whole-tree statistics.

The reward is the public-test pass fraction while any test fails; once all
public tests pass it blends in a model-produced correctness score (or, in
generated-tests mode, the pass fraction on model-written tests).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import (
    BlockAnalysis,
    BlockTraceReport,
    CandidateProgram,
    ProblemSpec,
    RunConfig,
    TestCase,
    VerbalFeedback,
)
from .gateway import GatewayError, LlmGateway
from .sandbox import (
    ExecStatus,
    ExecutionOutcome,
    Sandbox,
    SandboxError,
    TraceHarnessError,
    TraceTimeout,
)

SUMMARY_MAX_CHARS = 4000
GENERATED_TESTS_COUNT = 5


@dataclass
class RewardSignal:
    v_test: float
    v_llm: Optional[float] = None
    reward: float = 0.0
    feedback: Optional[VerbalFeedback] = None
    failed_cases: list[tuple[TestCase, str]] = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class Metrics:
    pass_rate: float
    pass_at_1: float
    n_problems: int


@dataclass
class TreeStats:
    full_pass_fraction: float
    mean_v_test: float
    n_candidates: int


def compute_reward(v_test: float, v_llm: Optional[float], cfg: RunConfig) -> float:
    """Dual reward: v_test below 1 passes through; at exactly 1 the model
    score is blended in (unless self-evaluation is disabled)."""
    if not 0.0 <= v_test <= 1.0:
        raise ValueError("v_test must lie in [0, 1]")
    if v_test < 1.0:
        return v_test
    if not cfg.self_eval and not cfg.gen_tests_eval:
        return v_test
    if v_llm is None:
        raise ValueError("v_llm required when v_test = 1 and self-evaluation is enabled")
    return cfg.w_test * v_test + cfg.w_llm * v_llm


def evaluate_candidate(
    program: str,
    problem: ProblemSpec,
    cfg: RunConfig,
    sandbox: Sandbox,
    gateway: LlmGateway,
) -> RewardSignal:
    """Run the public tests and assemble the full reward signal.

    On failure (and with verbal feedback enabled) the first failing test is
    traced block-by-block and judged by the model; with block_info disabled
    the feedback degrades to input/expected/actual plus stderr.
    """
    try:
        outcomes = sandbox.execute_tests(program, problem.public_tests, problem, cfg.exec_timeout)
    except SandboxError as exc:
        feedback = None
        if cfg.verbal_feedback and problem.public_tests:
            feedback = VerbalFeedback(
                failed_test=problem.public_tests[0],
                actual_output=f"sandbox error: {exc}",
                summary=f"Execution environment failure: {exc}",
            )
        return RewardSignal(v_test=0.0, reward=0.0, feedback=feedback, error=str(exc))

    passed = sum(1 for o in outcomes if o.status == ExecStatus.OK)
    v_test = passed / len(outcomes)
    failed_cases = [
        (test, _actual_text(outcome))
        for test, outcome in zip(problem.public_tests, outcomes)
        if outcome.status != ExecStatus.OK
    ]

    feedback: Optional[VerbalFeedback] = None
    if v_test < 1.0 and cfg.verbal_feedback:
        first_failed_idx = next(
            i for i, o in enumerate(outcomes) if o.status != ExecStatus.OK
        )
        failed_test = problem.public_tests[first_failed_idx]
        failed_outcome = outcomes[first_failed_idx]
        trace: Optional[BlockTraceReport] = None
        verdicts: Optional[list[BlockAnalysis]] = None
        if cfg.block_info and failed_outcome.status in (
            ExecStatus.WRONG_OUTPUT,
            ExecStatus.RUNTIME_ERROR,
        ):
            try:
                trace = sandbox.execute_traced(program, failed_test, problem, cfg.exec_timeout)
            except (TraceHarnessError, TraceTimeout):
                trace = None
            if trace is not None and trace.blocks:
                try:
                    verdicts = gateway.analyze_blocks(problem, program, trace, failed_test)
                except GatewayError:
                    verdicts = None
        feedback = build_verbal_feedback(failed_outcome, failed_test, trace, verdicts)

    v_llm: Optional[float] = None
    if v_test == 1.0:
        if cfg.gen_tests_eval:
            v_llm = _generated_tests_fraction(program, problem, cfg, sandbox, gateway)
        elif cfg.self_eval:
            v_llm = gateway.self_evaluate_program(problem, program)

    reward = compute_reward(v_test, v_llm, cfg)
    return RewardSignal(
        v_test=v_test, v_llm=v_llm, reward=reward, feedback=feedback, failed_cases=failed_cases
    )


def _generated_tests_fraction(
    program: str,
    problem: ProblemSpec,
    cfg: RunConfig,
    sandbox: Sandbox,
    gateway: LlmGateway,
) -> float:
    try:
        extra_tests = gateway.generate_unit_tests(problem, GENERATED_TESTS_COUNT)
    except GatewayError:
        return 0.0
    if not extra_tests:
        return 0.0
    try:
        outcomes = sandbox.execute_tests(program, extra_tests, problem, cfg.exec_timeout)
    except SandboxError:
        return 0.0
    return sum(1 for o in outcomes if o.status == ExecStatus.OK) / len(outcomes)


def _actual_text(outcome: ExecutionOutcome) -> str:
    if outcome.status == ExecStatus.TIMEOUT:
        return f"timeout after {outcome.duration:.1f}s"
    if outcome.status in (ExecStatus.RUNTIME_ERROR, ExecStatus.COMPILE_ERROR):
        return outcome.stderr.strip() or outcome.status.value
    return outcome.stdout


def build_verbal_feedback(
    failed_outcome: ExecutionOutcome,
    failed_test: TestCase,
    trace: Optional[BlockTraceReport] = None,
    verdicts: Optional[Sequence[BlockAnalysis]] = None,
) -> VerbalFeedback:
    """Assemble the prompt-ready failure summary: test input, expected vs
    actual output (or the error), and one line per block verdict."""
    actual = _actual_text(failed_outcome)
    lines = [
        "Failed public test case.",
        f"test input: {failed_test.input}",
        f"expected output: {failed_test.expected_output}",
    ]
    if failed_outcome.status == ExecStatus.TIMEOUT:
        lines.append(f"result: {actual}")
    elif failed_outcome.status in (ExecStatus.RUNTIME_ERROR, ExecStatus.COMPILE_ERROR):
        lines.append(f"error: {actual}")
    else:
        lines.append(f"actual output: {actual}")

    block_reports: list[BlockAnalysis] = list(verdicts) if verdicts else []
    if block_reports:
        lines.append("Block-level analysis:")
        for r in block_reports:
            explanation = f" - {r.explanation}" if r.explanation else ""
            lines.append(
                f"Block {r.block_index} (lines {r.line_span[0]}-{r.line_span[1]}): "
                f"{r.verdict.value}{explanation}"
            )

    summary = "\n".join(lines)
    if len(summary) > SUMMARY_MAX_CHARS:
        marker = "\n...[truncated]"
        summary = summary[: SUMMARY_MAX_CHARS - len(marker)] + marker

    return VerbalFeedback(
        failed_test=failed_test,
        actual_output=actual,
        block_reports=block_reports,
        summary=summary,
    )


def aggregate_metrics(private_fractions: Sequence[float]) -> Metrics:
    """pass_rate = mean private pass fraction x100; pass@1 = share of problems
    with fraction exactly 1, x100."""
    if not private_fractions:
        raise ValueError("no results to aggregate")
    n = len(private_fractions)
    pass_rate = 100.0 * sum(private_fractions) / n
    pass_at_1 = 100.0 * sum(1 for f in private_fractions if f == 1.0) / n
    return Metrics(pass_rate=pass_rate, pass_at_1=pass_at_1, n_problems=n)


def tree_statistics(candidates: Sequence[CandidateProgram]) -> TreeStats:
    """Both readings of whole-tree success: fraction of candidates passing all
    public tests, and the mean public pass rate over every candidate."""
    if not candidates:
        raise ValueError("no candidates")
    n = len(candidates)
    full = sum(1 for c in candidates if c.v_test == 1.0) / n
    mean = sum(c.v_test for c in candidates) / n
    return TreeStats(full_pass_fraction=full, mean_v_test=mean, n_candidates=n)
