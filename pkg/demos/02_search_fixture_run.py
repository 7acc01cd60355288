"""A complete search on a toy problem, driven by scripted model replies.

The replay backend plays the model's part: it proposes a faulty thought, the
generated program fails a public test, and the rethink step repairs the
thought in place using the execution feedback. Two rollout units suffice.

    python demos/02_search_fixture_run.py
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
    run_search,
)
from thoughtsearch.core import iter_nodes
from thoughtsearch.gateway import fp_generate, fp_propose, fp_regenerate, fp_self_eval

problem = ProblemSpec(
    id="double",
    statement="Read one integer n from stdin and print 2*n.",
    io_mode=IoMode.STDIN_STDOUT,
    public_tests=[TestCase("3\n", "6"), TestCase("10\n", "20")],
    private_tests=[TestCase("21\n", "42")],
)

BAD_THOUGHT = "square the number and print it"
GOOD_THOUGHT = "multiply the number by two and print it"
BAD_PROGRAM = "n = int(input())\nprint(n * n)\n"
GOOD_PROGRAM = "n = int(input())\nprint(2 * n)\n"

# Fixtures are keyed by prompt class + a fingerprint of the semantic state,
# so each scripted reply lands exactly where the search asks for it.
fixtures = {
    f"propose_thoughts:{fp_propose(problem.id, [], False)}": [
        json.dumps([{"thought": BAD_THOUGHT, "score": 0.9}])
    ],
    f"generate_program:{fp_generate(problem.id, [BAD_THOUGHT])}": [
        f"```python\n{BAD_PROGRAM}```"
    ],
    f"regenerate_thought:{fp_regenerate(problem.id, [], BAD_THOUGHT)}": [GOOD_THOUGHT],
    f"generate_program:{fp_generate(problem.id, [GOOD_THOUGHT])}": [
        f"```python\n{GOOD_PROGRAM}```"
    ],
    f"self_evaluate:{fp_self_eval(problem.id, GOOD_PROGRAM)}": ["0.9"],
}

cfg = RunConfig(max_rollouts=2, max_children=1, block_info=False, seed=7)
gateway = LlmGateway(ReplayBackend(fixtures))
result = run_search(problem, cfg, gateway, Sandbox())

print(f"rollout units used: {result.rollouts_used}  (one of them was a rethink)")
print(f"rethinks: {result.rethinks_used}")
print()
print("candidates, in order:")
for c in result.candidates:
    print(f"  rollout {c.rollout_index}: v_test={c.v_test:.2f} reward={c.reward:.2f}")
print()
print("final tree (the faulty thought was replaced in place):")
for node in iter_nodes(result.tree_root):
    indent = "  " * node.depth
    label = node.thought or "<root>"
    print(f"{indent}[{node.node_id}] q={node.q_value:.2f} visits={node.visits} "
          f"rethinks={node.rethink_count}  {label}")
print()
print("best program:")
print(result.best.source)
