"""Block-level execution feedback on a real failing program.

Runs the trace harness (the blocktracer package, installed from tracer/) on a
buggy program, has a scripted "model" judge each executed block, and prints
the verbal feedback exactly as the expansion and rethink prompts receive it.

    python demos/03_block_trace_feedback.py
"""

import json

from thoughtsearch import (
    IoMode,
    LlmGateway,
    ProblemSpec,
    ReplayBackend,
    RunConfig,
    Sandbox,
    TestCase,
    evaluate_candidate,
)

problem = ProblemSpec(
    id="running-max",
    statement="Read space-separated integers and print the largest one.",
    io_mode=IoMode.STDIN_STDOUT,
    public_tests=[TestCase("4 17 9\n", "17")],
    private_tests=[TestCase("5 3\n", "5")],
)

# The bug: the comparison is inverted, so the program tracks the minimum.
BUGGY = (
    "values = [int(v) for v in input().split()]\n"
    "best = values[0]\n"
    "for v in values[1:]:\n"
    "    if v < best:\n"
    "        best = v\n"
    "print(best)\n"
)

verdicts = [
    {"block_index": 0, "verdict": "correct", "explanation": "parses the input fine"},
    {"block_index": 1, "verdict": "incorrect", "explanation": "comparison inverted, keeps the smaller value"},
    {"block_index": 2, "verdict": "incorrect", "explanation": "assigns the smaller value to best"},
    {"block_index": 3, "verdict": "correct", "explanation": "prints the tracked value"},
]
gateway = LlmGateway(ReplayBackend({"analyze_blocks:*": [json.dumps(verdicts)]}))

cfg = RunConfig(block_info=True, exec_timeout=5.0)
signal = evaluate_candidate(BUGGY, problem, cfg, Sandbox(), gateway)

print(f"public pass fraction: {signal.v_test:.2f} -> reward {signal.reward:.2f}")
print()
print("verbal feedback handed to the next expansion / rethink prompt:")
print("-" * 60)
print(signal.feedback.summary)
print("-" * 60)
print()
print("per-block detail behind it (real variable states from the trace):")
for report in signal.feedback.block_reports:
    vars_repr = ", ".join(f"{k}={v}" for k, v in report.vars_after.items())
    print(f"  block {report.block_index} lines {report.line_span}: "
          f"{report.verdict.value:9s} vars after: {vars_repr}")
