from __future__ import annotations

import json
import sys
import textwrap

import pytest
from hypothesis import given
from hypothesis import strategies as st

from thoughtsearch.core import IoMode, TestCase
from thoughtsearch.sandbox import (
    ExecStatus,
    Sandbox,
    SandboxError,
    TraceHarnessError,
    TraceTimeout,
    judge_output,
)

from conftest import make_problem


class TestJudgeOutput:
    def test_trailing_newline_ignored(self):
        assert judge_output("5", "5\n")

    def test_trailing_spaces_ignored(self):
        assert judge_output("5 ", "5")

    def test_line_order_matters(self):
        assert not judge_output("5\n6", "6\n5")

    def test_trailing_blank_lines_ignored(self):
        assert judge_output("a\nb\n\n\n", "a\nb")

    def test_interior_whitespace_significant(self):
        assert not judge_output("a b", "ab")

    @given(st.text())
    def test_reflexive(self, s):
        assert judge_output(s, s)


class TestExecuteTests:
    def test_echo_program_ok(self, double_problem):
        box = Sandbox()
        outcomes = box.execute_tests(
            "print(input())", [TestCase("5\n", "5")], double_problem, timeout=5.0
        )
        assert outcomes[0].status == ExecStatus.OK
        assert outcomes[0].stdout.strip() == "5"

    def test_division_by_zero_is_runtime_error(self, double_problem):
        outcomes = Sandbox().execute_tests(
            "print(1 / 0)", [TestCase("", "")], double_problem, timeout=5.0
        )
        assert outcomes[0].status == ExecStatus.RUNTIME_ERROR
        assert "ZeroDivisionError" in outcomes[0].stderr

    def test_infinite_loop_times_out(self, double_problem):
        outcomes = Sandbox().execute_tests(
            "while True:\n    pass", [TestCase("", "")], double_problem, timeout=1.0
        )
        assert outcomes[0].status == ExecStatus.TIMEOUT
        assert outcomes[0].duration >= 1.0
        assert outcomes[0].duration < 2.5  # hard kill at timeout + 1s grace

    def test_environment_is_an_allowlist(self, double_problem, monkeypatch):
        monkeypatch.setenv("SUPER_SECRET_TOKEN", "hunter2")
        program = "import os\nprint(sorted(k for k in os.environ if 'SECRET' in k))"
        outcomes = Sandbox().execute_tests(program, [TestCase("", "[]")], double_problem, timeout=5.0)
        assert outcomes[0].status == ExecStatus.OK

    def test_syntax_error_is_compile_error_for_all_tests(self, double_problem):
        outcomes = Sandbox().execute_tests(
            "def broken(:", [TestCase("", ""), TestCase("x", "y")], double_problem, timeout=5.0
        )
        assert [o.status for o in outcomes] == [ExecStatus.COMPILE_ERROR] * 2

    def test_wrong_output_detected(self, double_problem):
        outcomes = Sandbox().execute_tests(
            "print(41)", [TestCase("", "42")], double_problem, timeout=5.0
        )
        assert outcomes[0].status == ExecStatus.WRONG_OUTPUT

    def test_empty_program_rejected(self, double_problem):
        with pytest.raises(SandboxError):
            Sandbox().execute_tests("", [TestCase("", "")], double_problem, timeout=5.0)

    def test_one_outcome_per_test_in_order(self, double_problem):
        program = "import sys\nprint(int(sys.stdin.read()) * 2)"
        tests = [TestCase("3\n", "6"), TestCase("4\n", "9"), TestCase("5\n", "10")]
        outcomes = Sandbox(workers=3).execute_tests(program, tests, double_problem, timeout=5.0)
        assert [o.status for o in outcomes] == [
            ExecStatus.OK,
            ExecStatus.WRONG_OUTPUT,
            ExecStatus.OK,
        ]

    def test_network_denied(self, double_problem):
        program = "import socket\nsocket.socket()\nprint('reached')"
        outcomes = Sandbox().execute_tests(program, [TestCase("", "")], double_problem, timeout=5.0)
        assert outcomes[0].status == ExecStatus.RUNTIME_ERROR
        assert "network disabled" in outcomes[0].stderr

    def test_deterministic_across_runs(self, double_problem):
        program = "import sys\ndata = sys.stdin.read().split()\nprint(sum(map(int, data)))"
        tests = [TestCase("1 2 3", "6")]
        first = Sandbox().execute_tests(program, tests, double_problem, timeout=5.0)
        second = Sandbox().execute_tests(program, tests, double_problem, timeout=5.0)
        assert [(o.status, o.stdout) for o in first] == [(o.status, o.stdout) for o in second]


class TestFunctionalMode:
    @pytest.fixture
    def fn_problem(self):
        return make_problem(
            pid="maxfn",
            statement="Implement pick_max(xs) returning the max of a nonempty list.",
            io_mode=IoMode.FUNCTIONAL,
            entry_point="pick_max",
            public=[("([3, 1, 2],)", "3")],
            private=[("([31415, 27182],)", "31415")],
        )

    def test_return_value_judged_by_repr(self, fn_problem):
        program = "def pick_max(xs):\n    return max(xs)"
        outcomes = Sandbox().execute_tests(
            program, fn_problem.public_tests, fn_problem, timeout=5.0
        )
        assert outcomes[0].status == ExecStatus.OK

    def test_single_bare_argument_accepted(self, fn_problem):
        program = "def pick_max(x):\n    return x + 1"
        outcomes = Sandbox().execute_tests(
            program, [TestCase("41", "42")], fn_problem, timeout=5.0
        )
        assert outcomes[0].status == ExecStatus.OK

    def test_missing_entry_point_is_runtime_error(self, fn_problem):
        program = "def other():\n    return 0"
        outcomes = Sandbox().execute_tests(
            program, fn_problem.public_tests, fn_problem, timeout=5.0
        )
        assert outcomes[0].status == ExecStatus.RUNTIME_ERROR

    def test_argument_serialization_round_trips(self):
        import ast

        from thoughtsearch.sandbox import serialize_args, serialize_return

        for args in [(1, 2), ([1, 2, 3],), ("text", None), ((1, 2), 3)]:
            assert ast.literal_eval(serialize_args(args)) == args
        for value in [42, "s", [1, [2]], {"k": 1}, None, (1,)]:
            assert ast.literal_eval(serialize_return(value)) == value


# A stub harness lets the primary suite exercise trace ingestion without the
# real tracer package: it replays a pre-recorded report JSON.
STUB_OK = textwrap.dedent(
    """\
    import json, sys
    program, inp, cfg, report = sys.argv[1:5]
    data = {
        "schema_version": 1,
        "status": "ok",
        "stdout": "1\\n",
        "stderr": "",
        "blocks": [
            {"block_index": 0, "start_line": 1, "end_line": 2, "source": "x = 0\\nfor i in range(2):", "vars_after": {"i": "1", "x": "1"}},
            {"block_index": 1, "start_line": 3, "end_line": 3, "source": "    x += i", "vars_after": {"i": "1", "x": "1"}},
            {"block_index": 2, "start_line": 4, "end_line": 4, "source": "print(x)", "vars_after": {"i": "1", "x": "1"}},
        ],
        "executed_sequence": [0, 1, 1, 2],
        "snapshots": [],
        "truncated": False,
    }
    with open(report, "w") as f:
        json.dump(data, f)
    """
)

STUB_CRASH = "import sys\nsys.stderr.write('harness exploded')\nsys.exit(3)\n"
STUB_HANG = "import time\ntime.sleep(60)\n"
STUB_NO_REPORT = "import sys\nsys.exit(0)\n"


def _stub_sandbox(tmp_path, stub_source: str) -> Sandbox:
    stub = tmp_path / "stub_harness.py"
    stub.write_text(stub_source)
    return Sandbox(tracer_cmd=[sys.executable, str(stub)])


class TestExecuteTraced:
    def test_report_ingested_and_wrong_output_upgraded(self, tmp_path, double_problem):
        box = _stub_sandbox(tmp_path, STUB_OK)
        report = box.execute_traced(
            "x = 0\nfor i in range(2):\n    x += i\nprint(x)",
            TestCase("", "7"),
            double_problem,
            timeout=5.0,
        )
        assert report.executed_sequence == [0, 1, 1, 2]
        assert len(report.blocks) == 3
        assert report.blocks[1].vars_after["x"] == "1"
        # harness said ok; the sandbox judges stdout "1" against expected "7"
        assert report.status == "wrong_output"

    def test_matching_output_stays_ok(self, tmp_path, double_problem):
        box = _stub_sandbox(tmp_path, STUB_OK)
        report = box.execute_traced("print(1)", TestCase("", "1"), double_problem, timeout=5.0)
        assert report.status == "ok"

    def test_harness_crash_degenerates_to_stderr_report(self, tmp_path, double_problem):
        box = _stub_sandbox(tmp_path, STUB_CRASH)
        report = box.execute_traced("print(1)", TestCase("", "1"), double_problem, timeout=5.0)
        assert report.blocks == []
        assert "harness exploded" in report.stderr

    def test_harness_timeout_raises(self, tmp_path, double_problem):
        box = _stub_sandbox(tmp_path, STUB_HANG)
        with pytest.raises(TraceTimeout):
            box.execute_traced("print(1)", TestCase("", "1"), double_problem, timeout=0.5)

    def test_missing_report_is_harness_error(self, tmp_path, double_problem):
        box = _stub_sandbox(tmp_path, STUB_NO_REPORT)
        with pytest.raises(TraceHarnessError):
            box.execute_traced("print(1)", TestCase("", "1"), double_problem, timeout=5.0)

    def test_unconfigured_tracer_raises_harness_error(self, double_problem, monkeypatch):
        import thoughtsearch.sandbox as sbx

        monkeypatch.setattr(sbx, "_default_tracer_cmd", lambda: None)
        with pytest.raises(TraceHarnessError):
            Sandbox().execute_traced("print(1)", TestCase("", "1"), double_problem, timeout=5.0)
