"""Child-process execution of candidate programs against test cases.

Each test runs in a fresh process with a fresh temp working directory, an
environment allowlist, a memory rlimit and a hard kill at timeout + 1s grace.
Programs are exec'd through a tiny runner that voids socket creation first;
this is process isolation, not a security boundary.
"""

from __future__ import annotations

import json
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .core import BlockTraceReport, IoMode, ProblemSpec, TestCase


class SandboxError(Exception):
    """The sandbox itself failed (setup, interpreter missing) — distinct from
    a failure of the program under test."""


class TraceHarnessError(SandboxError):
    """The trace harness malfunctioned (could not launch, or exited cleanly
    without a readable report)."""


class TraceTimeout(SandboxError):
    """The trace harness had to be killed at the hard deadline."""

    def __init__(self, message: str, stderr: str = "") -> None:
        super().__init__(message)
        self.stderr = stderr


class ExecStatus(str, Enum):
    OK = "ok"
    WRONG_OUTPUT = "wrong_output"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    COMPILE_ERROR = "compile_error"


@dataclass
class ExecutionOutcome:
    status: ExecStatus
    stdout: str = ""
    stderr: str = ""
    duration: float = 0.0


def judge_output(actual: str, expected: str) -> bool:
    """Whitespace-tolerant equality: trailing whitespace per line and trailing
    blank lines are ignored; line order matters."""
    return _normalize(actual) == _normalize(expected)


def _normalize(text: str) -> str:
    lines = [line.rstrip() for line in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    return "\n".join(lines)


# Runner preludes. The subject program is compiled with its own filename so
# tracebacks and line numbers stay untouched.
_STDIN_RUNNER = """\
import socket as _socket
import sys

def _no_net(*a, **k):
    raise OSError("network disabled in sandbox")

_socket.socket = _no_net

_path = sys.argv[1]
with open(_path) as _f:
    _src = _f.read()
_code = compile(_src, _path, "exec")
del sys.argv[1:]
exec(_code, {"__name__": "__main__"})
"""

_FUNC_RUNNER = """\
import ast
import socket as _socket
import sys

def _no_net(*a, **k):
    raise OSError("network disabled in sandbox")

_socket.socket = _no_net

_path, _entry = sys.argv[1], sys.argv[2]
with open(_path) as _f:
    _src = _f.read()
_ns = {"__name__": "__subject__"}
exec(compile(_src, _path, "exec"), _ns)
_raw = sys.stdin.read()
_args = ast.literal_eval(_raw.strip()) if _raw.strip() else ()
if not isinstance(_args, tuple):
    _args = (_args,)
_ret = _ns[_entry](*_args)
sys.stdout.write(repr(_ret) + "\\n")
"""


def serialize_args(args: tuple) -> str:
    """Functional-mode test input: Python literal of the argument tuple."""
    return repr(args)


def serialize_return(value: object) -> str:
    """Functional-mode expected output: repr of the return value."""
    return repr(value)


class Sandbox:
    """Stateless coordinator for test execution and block tracing.

    ``tracer_cmd`` is the command prefix for the trace harness (e.g.
    ``[sys.executable, "-m", "blocktracer"]``); the harness receives the
    program file, input file, config JSON and report path as arguments.
    """

    def __init__(
        self,
        workers: int = 1,
        memory_limit_mb: int = 512,
        tracer_cmd: Optional[Sequence[str]] = None,
    ) -> None:
        self.workers = max(1, workers)
        self.memory_limit_mb = memory_limit_mb
        self.tracer_cmd = list(tracer_cmd) if tracer_cmd else None

    # ------------------------------------------------------------ execution

    def execute_tests(
        self,
        program: str,
        tests: Sequence[TestCase],
        problem: ProblemSpec,
        timeout: float = 10.0,
    ) -> list[ExecutionOutcome]:
        if not program:
            raise SandboxError("empty program")
        try:
            compile(program, "<candidate>", "exec")
        except SyntaxError as exc:
            err = f"SyntaxError: {exc}"
            return [ExecutionOutcome(ExecStatus.COMPILE_ERROR, stderr=err) for _ in tests]

        if len(tests) <= 1 or self.workers == 1:
            return [self._run_one(program, t, problem, timeout) for t in tests]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(lambda t: self._run_one(program, t, problem, timeout), tests))

    def _run_one(
        self, program: str, test: TestCase, problem: ProblemSpec, timeout: float
    ) -> ExecutionOutcome:
        workdir = self._mkdtemp()
        try:
            program_path = os.path.join(workdir, "program.py")
            runner_path = os.path.join(workdir, "runner.py")
            with open(program_path, "w") as f:
                f.write(program)
            if problem.io_mode == IoMode.FUNCTIONAL:
                with open(runner_path, "w") as f:
                    f.write(_FUNC_RUNNER)
                cmd = [sys.executable, "-I", runner_path, program_path, problem.entry_point or ""]
            else:
                with open(runner_path, "w") as f:
                    f.write(_STDIN_RUNNER)
                cmd = [sys.executable, "-I", runner_path, program_path]

            stdout, stderr, returncode, duration, timed_out = self._communicate(
                cmd, test.input, timeout, workdir
            )
            if timed_out:
                return ExecutionOutcome(ExecStatus.TIMEOUT, stdout, stderr, duration)
            if returncode != 0:
                return ExecutionOutcome(ExecStatus.RUNTIME_ERROR, stdout, stderr, duration)
            status = (
                ExecStatus.OK
                if judge_output(stdout, test.expected_output)
                else ExecStatus.WRONG_OUTPUT
            )
            return ExecutionOutcome(status, stdout, stderr, duration)
        finally:
            shutil.rmtree(workdir, ignore_errors=True)

    def _communicate(
        self, cmd: list[str], stdin_text: str, timeout: float, workdir: str
    ) -> tuple[str, str, int, float, bool]:
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                cwd=workdir,
                env=self._child_env(workdir),
                text=True,
                start_new_session=True,
                preexec_fn=self._limit_resources,
            )
        except OSError as exc:
            raise SandboxError(f"failed to launch sandbox process: {exc}") from exc
        try:
            stdout, stderr = proc.communicate(input=stdin_text, timeout=timeout)
            return stdout, stderr, proc.returncode, time.monotonic() - start, False
        except subprocess.TimeoutExpired:
            self._kill_group(proc)
            try:
                stdout, stderr = proc.communicate(timeout=1.0)
            except subprocess.TimeoutExpired:
                stdout, stderr = "", ""
            duration = time.monotonic() - start
            return stdout or "", stderr or "", -9, max(duration, timeout), True

    @staticmethod
    def _kill_group(proc: subprocess.Popen) -> None:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()

    def _limit_resources(self) -> None:  # runs in the child, pre-exec
        try:
            import resource

            limit = self.memory_limit_mb * 1024 * 1024
            resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
        except Exception:
            pass

    @staticmethod
    def _child_env(workdir: str) -> dict[str, str]:
        env = {
            "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
            "HOME": workdir,
            "TMPDIR": workdir,
            "LANG": os.environ.get("LANG", "C.UTF-8"),
            "PYTHONDONTWRITEBYTECODE": "1",
            "PYTHONHASHSEED": "0",
        }
        return env

    @staticmethod
    def _mkdtemp() -> str:
        try:
            return tempfile.mkdtemp(prefix="tsbox_")
        except OSError as exc:
            raise SandboxError(f"failed to create sandbox dir: {exc}") from exc

    # -------------------------------------------------------------- tracing

    def execute_traced(
        self,
        program: str,
        test: TestCase,
        problem: ProblemSpec,
        timeout: float = 10.0,
    ) -> BlockTraceReport:
        """Run the trace harness on one (program, failing test) pair and
        ingest its JSON report."""
        if self.tracer_cmd is None:
            cmd_prefix = _default_tracer_cmd()
            if cmd_prefix is None:
                raise TraceHarnessError("no trace harness configured or installed")
        else:
            cmd_prefix = self.tracer_cmd

        workdir = self._mkdtemp()
        try:
            program_path = os.path.join(workdir, "program.py")
            input_path = os.path.join(workdir, "input.txt")
            config_path = os.path.join(workdir, "config.json")
            report_path = os.path.join(workdir, "report.json")
            with open(program_path, "w") as f:
                f.write(program)
            with open(input_path, "w") as f:
                f.write(test.input)
            with open(config_path, "w") as f:
                json.dump(
                    {
                        "io_mode": problem.io_mode.value,
                        "entry_point": problem.entry_point,
                        "timeout": timeout,
                    },
                    f,
                )

            cmd = list(cmd_prefix) + [program_path, input_path, config_path, report_path]
            stdout, stderr, returncode, _, timed_out = self._communicate(
                cmd, "", timeout + 1.0, workdir
            )
            if timed_out:
                raise TraceTimeout("trace harness killed at hard deadline", stderr=stderr)
            if returncode != 0:
                # Harness crash: degenerate report carrying only stderr.
                return BlockTraceReport(status="runtime_error", stderr=stderr)
            try:
                with open(report_path) as f:
                    data = json.load(f)
            except (OSError, json.JSONDecodeError) as exc:
                raise TraceHarnessError(f"trace report unreadable: {exc}") from exc
            report = BlockTraceReport.from_json(data)
            if report.status == "ok" and not judge_output(report.stdout, test.expected_output):
                report.status = "wrong_output"
            return report
        finally:
            shutil.rmtree(workdir, ignore_errors=True)


def _default_tracer_cmd() -> Optional[list[str]]:
    try:
        import blocktracer  # noqa: F401
    except ImportError:
        return None
    return [sys.executable, "-m", "blocktracer"]
