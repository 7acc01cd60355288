from __future__ import annotations

import pytest

from thoughtsearch.core import IoMode, ProblemSpec, RunConfig, TestCase
from thoughtsearch.gateway import LlmGateway, ReplayBackend


def make_problem(
    pid: str = "double",
    statement: str = "Read one integer n from stdin and print 2*n.",
    io_mode: IoMode = IoMode.STDIN_STDOUT,
    entry_point: str | None = None,
    public: list[tuple[str, str]] | None = None,
    private: list[tuple[str, str]] | None = None,
) -> ProblemSpec:
    public = public if public is not None else [("3\n", "6"), ("10\n", "20")]
    private = private if private is not None else [("21\n", "42"), ("31487\n", "62974")]
    return ProblemSpec(
        id=pid,
        statement=statement,
        io_mode=io_mode,
        entry_point=entry_point,
        public_tests=[TestCase(*t) for t in public],
        private_tests=[TestCase(*t) for t in private],
    )


def replay_gateway(fixtures: dict, **kwargs) -> LlmGateway:
    return LlmGateway(ReplayBackend(fixtures), **kwargs)


def fenced(code: str) -> str:
    return f"```python\n{code}```" if code.endswith("\n") else f"```python\n{code}\n```"


GOOD_DOUBLE = "n = int(input())\nprint(2 * n)\n"
BAD_DOUBLE = "n = int(input())\nprint(n * n)\n"


@pytest.fixture
def double_problem() -> ProblemSpec:
    return make_problem()


@pytest.fixture
def base_cfg() -> RunConfig:
    # block_info off by default in unit tests so no trace harness is needed;
    # integration tests opt back in.
    return RunConfig(max_rollouts=4, max_children=2, block_info=False, exec_timeout=5.0)
