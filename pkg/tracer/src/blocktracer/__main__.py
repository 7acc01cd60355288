"""Harness entry point.

Usage: python -m blocktracer PROGRAM INPUT CONFIG REPORT

PROGRAM is the subject source file, INPUT the raw test input, CONFIG a JSON
object {"io_mode", "entry_point", "timeout"}, REPORT the output path for the
JSON trace report. The exit code is 0 whenever a report was produced, even if
the subject program failed; a nonzero exit means the harness itself broke.
"""

from __future__ import annotations

import json
import sys
import traceback

from .tracer import trace_run


def main(argv: list[str]) -> int:
    if len(argv) != 4:
        print("usage: python -m blocktracer PROGRAM INPUT CONFIG REPORT", file=sys.stderr)
        return 2
    program_path, input_path, config_path, report_path = argv
    try:
        with open(program_path) as f:
            source = f.read()
        with open(input_path) as f:
            test_input = f.read()
        with open(config_path) as f:
            config = json.load(f)
        report = trace_run(
            source,
            test_input,
            io_mode=config.get("io_mode", "stdin_stdout"),
            entry_point=config.get("entry_point"),
            timeout=float(config.get("timeout", 10.0)),
            filename=program_path,
        )
        with open(report_path, "w") as f:
            json.dump(report.to_json(), f)
    except Exception:
        traceback.print_exc()
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
