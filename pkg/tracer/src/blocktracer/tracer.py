"""In-interpreter execution tracing of one subject program on one test input.

The subject runs under sys.settrace in this process. Only the top-level
module frame is followed (plus every frame of the entry-point function in
functional mode); call interiors of other functions are opaque. A block entry
is recorded when its first line executes, and a variable snapshot is taken
each time a block finishes a pass, so loop bodies appear once per iteration.
"""

from __future__ import annotations

import ast
import io
import signal
import sys
import traceback
import types
from contextlib import redirect_stderr, redirect_stdout
from dataclasses import dataclass, field

from .cfg import BasicBlock, line_to_block_map, segment_basic_blocks

SCHEMA_VERSION = 1
MAX_SEQUENCE = 1000
MAX_VALUE_CHARS = 200


class _SubjectTimeout(BaseException):
    """Raised by the alarm handler; BaseException so subject-level
    ``except Exception`` cannot swallow it."""


@dataclass
class TraceReport:
    status: str = "ok"
    stdout: str = ""
    stderr: str = ""
    blocks: list[BasicBlock] = field(default_factory=list)
    executed_sequence: list[int] = field(default_factory=list)
    snapshots: list[dict] = field(default_factory=list)
    truncated: bool = False

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "stdout": self.stdout,
            "stderr": self.stderr,
            "blocks": [b.to_json() for b in self.blocks],
            "executed_sequence": self.executed_sequence,
            "snapshots": self.snapshots,
            "truncated": self.truncated,
        }


_SKIPPED_TYPES = (
    types.ModuleType,
    types.FunctionType,
    types.BuiltinFunctionType,
    type,
)


def _safe_repr(value: object) -> str:
    try:
        text = repr(value)
    except Exception:
        return "<unrepresentable>"
    if len(text) > MAX_VALUE_CHARS:
        text = text[: MAX_VALUE_CHARS - 3] + "..."
    return text


def _snapshot_vars(frame) -> dict[str, str]:
    out: dict[str, str] = {}
    for name, value in frame.f_locals.items():
        if name.startswith("__"):
            continue
        if isinstance(value, _SKIPPED_TYPES):
            continue
        out[name] = _safe_repr(value)
    return out


class _BlockRecorder:
    """Shared across frames: chronological block entries and pass snapshots."""

    def __init__(self, blocks: list[BasicBlock]) -> None:
        self.blocks = blocks
        self.line_map = line_to_block_map(blocks)
        self.start_lines = {b.block_index: b.start_line for b in blocks}
        self.sequence: list[int] = []
        self.snapshots: list[dict] = []
        self.truncated = False

    def enter(self, block_index: int) -> None:
        if len(self.sequence) >= MAX_SEQUENCE:
            self.truncated = True
            return
        self.sequence.append(block_index)

    def finish_pass(self, block_index: int, frame) -> None:
        vars_after = _snapshot_vars(frame)
        self.blocks[block_index].vars_after = vars_after
        if len(self.snapshots) >= MAX_SEQUENCE:
            self.truncated = True
            return
        self.snapshots.append({"block_index": block_index, "vars_after": vars_after})


class _FrameTracer:
    def __init__(self, recorder: _BlockRecorder, filename: str, entry_point: str | None) -> None:
        self.recorder = recorder
        self.filename = filename
        self.entry_point = entry_point
        self._open_block: dict[int, int] = {}  # frame id -> block mid-pass

    def _follows(self, frame) -> bool:
        code = frame.f_code
        if code.co_filename != self.filename:
            return False
        if code.co_name == "<module>":
            return True
        return self.entry_point is not None and code.co_name == self.entry_point

    def global_trace(self, frame, event, arg):
        if event == "call" and self._follows(frame):
            return self.local_trace
        return None

    def local_trace(self, frame, event, arg):
        rec = self.recorder
        key = id(frame)
        if event == "line":
            block = rec.line_map.get(frame.f_lineno)
            if block is None:
                return self.local_trace
            previous = self._open_block.get(key)
            entering = frame.f_lineno == rec.start_lines[block]
            if previous is not None and (block != previous or entering):
                rec.finish_pass(previous, frame)
            if entering:
                rec.enter(block)
            self._open_block[key] = block
        elif event == "return":
            previous = self._open_block.pop(key, None)
            if previous is not None:
                rec.finish_pass(previous, frame)
        elif event == "exception":
            # the current line did not complete; drop the pending pass
            self._open_block.pop(key, None)
        return self.local_trace


def _parse_args(raw: str) -> tuple:
    text = raw.strip()
    if not text:
        return ()
    value = ast.literal_eval(text)
    return value if isinstance(value, tuple) else (value,)


def trace_run(
    source: str,
    test_input: str,
    io_mode: str = "stdin_stdout",
    entry_point: str | None = None,
    timeout: float = 10.0,
    filename: str = "<subject>",
) -> TraceReport:
    """Segment, execute and trace one (program, test input) pair.

    Subject failures land in the report status; only harness-level problems
    raise. The report is always self-consistent: partial traces survive
    runtime errors and timeouts.
    """
    report = TraceReport()
    try:
        blocks = segment_basic_blocks(source)
    except SyntaxError as exc:
        report.status = "compile_error"
        report.stderr = f"SyntaxError: {exc}"
        return report
    report.blocks = blocks

    recorder = _BlockRecorder(blocks)
    tracer = _FrameTracer(recorder, filename, entry_point if io_mode == "functional" else None)
    code = compile(source, filename, "exec")
    module_globals: dict = {"__name__": "__main__"}

    stdout_buf, stderr_buf = io.StringIO(), io.StringIO()
    original_stdin = sys.stdin
    sys.stdin = io.StringIO(test_input)

    def _on_alarm(signum, frame):
        raise _SubjectTimeout()

    previous_handler = signal.signal(signal.SIGALRM, _on_alarm)
    signal.setitimer(signal.ITIMER_REAL, max(timeout, 0.01))
    try:
        with redirect_stdout(stdout_buf), redirect_stderr(stderr_buf):
            sys.settrace(tracer.global_trace)
            try:
                exec(code, module_globals)
                if io_mode == "functional":
                    if entry_point not in module_globals:
                        raise NameError(f"entry point {entry_point!r} is not defined")
                    args = _parse_args(test_input)
                    result = module_globals[entry_point](*args)
                    print(repr(result))
            finally:
                sys.settrace(None)
    except _SubjectTimeout:
        report.status = "timeout"
    except BaseException:
        report.status = "runtime_error"
        stderr_buf.write(traceback.format_exc())
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, previous_handler)
        sys.stdin = original_stdin

    report.stdout = stdout_buf.getvalue()
    report.stderr = stderr_buf.getvalue()
    report.executed_sequence = recorder.sequence
    report.snapshots = recorder.snapshots
    report.truncated = recorder.truncated
    return report
