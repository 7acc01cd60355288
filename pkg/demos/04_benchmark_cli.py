"""The benchmark harness end to end, through the command-line interface.

Builds a three-problem dataset and a replay fixture file in a temp directory,
invokes the CLI as a subprocess, then reads back the results file, the
metrics record and one tree dump.

    python demos/04_benchmark_cli.py
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

workdir = Path(tempfile.mkdtemp(prefix="ts_demo_"))

dataset = [
    {
        "id": "double",
        "statement": "Read one integer n from stdin and print 2*n.",
        "io_mode": "stdin_stdout",
        "public_tests": [{"input": "3\n", "expected_output": "6"}],
        "private_tests": [{"input": "21\n", "expected_output": "42"}],
    },
    {
        "id": "greet",
        "statement": "Read a name from stdin and print 'Hello <name>'.",
        "io_mode": "stdin_stdout",
        "public_tests": [{"input": "Ada\n", "expected_output": "Hello Ada"}],
        "private_tests": [{"input": "Grace\n", "expected_output": "Hello Grace"}],
    },
    {
        "id": "maxfn",
        "statement": "Implement pick_max(xs) returning the maximum of a nonempty list.",
        "io_mode": "functional",
        "entry_point": "pick_max",
        "public_tests": [{"input": "([3, 1, 2],)", "expected_output": "3"}],
        "private_tests": [{"input": "([8, 5],)", "expected_output": "8"}],
    },
]
dataset_path = workdir / "toy.jsonl"
dataset_path.write_text("\n".join(json.dumps(r) for r in dataset) + "\n")


def thought(text):
    return json.dumps([{"thought": text, "score": 0.9}])


def fenced(code):
    return f"```python\n{code}```"


# Wildcard fixtures are consumed in call order: one proposal, one program and
# one self-evaluation per problem (a single rollout each).
fixtures = {
    "propose_thoughts:*": [
        thought("read the integer, print its double"),
        thought("read the name, prefix with Hello"),
        thought("return max of the list"),
    ],
    "generate_program:*": [
        fenced("n = int(input())\nprint(2 * n)\n"),
        fenced("name = input().strip()\nprint('Hello ' + name)\n"),
        fenced("def pick_max(xs):\n    return max(xs)\n"),
    ],
    "self_evaluate:*": ["0.9", "0.8", "0.95"],
}
fixtures_path = workdir / "fixtures.json"
fixtures_path.write_text(json.dumps(fixtures))

out_path = workdir / "results.jsonl"
cmd = [
    sys.executable, "-m", "thoughtsearch.cli",
    "--dataset", str(dataset_path),
    "--format", "generic_jsonl",
    "--backend", "replay",
    "--fixtures", str(fixtures_path),
    "--rollouts", "1",
    "--max-children", "1",
    "--no-block-info",
    "--seed", "0",
    "--out", str(out_path),
]
print("$", " ".join(cmd))
proc = subprocess.run(cmd, capture_output=True, text=True)
print(proc.stdout)

print("results file records:")
for line in out_path.read_text().splitlines():
    record = json.loads(line)
    if record["type"] == "result":
        print(f"  {record['problem_id']}: reward={record['best_reward']:.2f} "
              f"private={record['private_fraction']:.2f}")
    else:
        print(f"  metrics: pass_rate={record['pass_rate']} pass@1={record['pass_at_1']}")

dump_path = out_path.parent / json.loads(out_path.read_text().splitlines()[0])["tree_dump_path"]
dump = json.loads(dump_path.read_text())
print()
print(f"tree dump for {dump['problem_id']}: "
      f"{dump['tree_stats']['n_candidates']} candidate(s), "
      f"mean public pass rate {dump['tree_stats']['mean_v_test']:.2f}")
print(f"event log entries: {[e['event'] for e in dump['events']]}")
