"""Shared domain model: problems, tests, thought-tree nodes, candidates, config.

Everything here is a plain value type. The search tree is owned and mutated by
a single search loop; anything that needs a stable snapshot (tree dumps,
logging) serializes through ``node_to_dict``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional


class IoMode(str, Enum):
    STDIN_STDOUT = "stdin_stdout"
    FUNCTIONAL = "functional"


class Verdict(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class TestCase:
    """One input/output pair.

    ``input`` is the stdin payload (stdin_stdout mode) or a Python literal of
    the argument tuple (functional mode). ``expected_output`` is the expected
    stdout text, or the repr of the expected return value. It may be empty but
    never None.
    """

    input: str
    expected_output: str

    __test__ = False  # not a pytest class, despite the name


@dataclass
class ProblemSpec:
    """A coding problem with its visible and held-out tests."""

    id: str
    statement: str
    io_mode: IoMode = IoMode.STDIN_STDOUT
    entry_point: Optional[str] = None
    starter_code: Optional[str] = None
    public_tests: list[TestCase] = field(default_factory=list)
    private_tests: list[TestCase] = field(default_factory=list)


@dataclass
class ValidationResult:
    ok: bool
    violations: list[str] = field(default_factory=list)


def validate_problem(spec: ProblemSpec) -> ValidationResult:
    """Check ProblemSpec invariants; violations are returned, never raised."""
    violations: list[str] = []
    if not spec.id:
        violations.append("id empty")
    if not spec.statement.strip():
        violations.append("statement empty")
    if not spec.public_tests:
        violations.append("public_tests empty")
    if spec.io_mode == IoMode.FUNCTIONAL and not spec.entry_point:
        violations.append("entry_point required for functional mode")
    for i, test in enumerate(spec.public_tests + spec.private_tests):
        if test.expected_output is None:  # defensive: None smuggled past typing
            violations.append(f"test {i} expected_output undefined")
    return ValidationResult(ok=not violations, violations=violations)


@dataclass
class BlockAnalysis:
    """Model-assigned verdict for one executed basic block."""

    block_index: int
    line_span: tuple[int, int]
    source: str
    vars_after: dict[str, str] = field(default_factory=dict)
    verdict: Verdict = Verdict.UNKNOWN
    explanation: str = ""


@dataclass
class VerbalFeedback:
    """Textual record of a failing public test, attached to the evaluated node.

    ``summary`` is the prompt-ready rendering: test input, expected vs actual
    output (or the error), and one line per block verdict.
    """

    failed_test: TestCase
    actual_output: str
    block_reports: list[BlockAnalysis] = field(default_factory=list)
    summary: str = ""


@dataclass
class ThoughtNode:
    """One node of the search tree: the thought (action) taken to reach it,
    its prior score, and the MCTS bookkeeping.

    q_value is the maximum reward ever backpropagated through the node;
    visits counts backpropagations. The root has an empty thought, no parent,
    depth 0 and node_id 0.
    """

    node_id: int
    thought: str = ""
    parent: Optional["ThoughtNode"] = field(default=None, repr=False)
    prior: float = 1.0
    q_value: float = 0.0
    visits: int = 0
    children: list["ThoughtNode"] = field(default_factory=list)
    feedback: Optional[VerbalFeedback] = None
    rethink_count: int = 0
    depth: int = 0
    terminal: bool = False
    last_v_test: Optional[float] = None


def make_root() -> ThoughtNode:
    root = ThoughtNode(node_id=0)
    root._next_id = 1  # type: ignore[attr-defined]  # allocator lives on the root
    return root


def tree_root_of(node: ThoughtNode) -> ThoughtNode:
    while node.parent is not None:
        node = node.parent
    return node


def allocate_node_id(any_node: ThoughtNode) -> int:
    """Monotonically increasing ids per tree; used for deterministic tie-breaks."""
    root = tree_root_of(any_node)
    next_id = getattr(root, "_next_id", None)
    if next_id is None:  # tree built by hand in tests
        next_id = 1 + max(n.node_id for n in iter_nodes(root))
    root._next_id = next_id + 1  # type: ignore[attr-defined]
    return next_id


def add_child(parent: ThoughtNode, thought: str, prior: float) -> ThoughtNode:
    child = ThoughtNode(
        node_id=allocate_node_id(parent),
        thought=thought,
        parent=parent,
        prior=min(1.0, max(0.0, prior)),
        depth=parent.depth + 1,
    )
    parent.children.append(child)
    return child


def iter_nodes(root: ThoughtNode):
    """Yield every node of the tree, parents before children."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def thought_chain(node: ThoughtNode) -> list[str]:
    """Root-to-node thoughts, excluding the root's empty thought."""
    chain: list[str] = []
    cur: Optional[ThoughtNode] = node
    while cur is not None and cur.parent is not None:
        chain.append(cur.thought)
        cur = cur.parent
    chain.reverse()
    return chain


def node_to_dict(node: ThoughtNode) -> dict[str, Any]:
    """Deterministic, JSON-ready snapshot of a subtree."""
    return {
        "node_id": node.node_id,
        "thought": node.thought,
        "prior": node.prior,
        "q_value": node.q_value,
        "visits": node.visits,
        "depth": node.depth,
        "rethink_count": node.rethink_count,
        "terminal": node.terminal,
        "feedback_summary": node.feedback.summary if node.feedback else None,
        "children": [node_to_dict(c) for c in node.children],
    }


@dataclass
class CandidateProgram:
    """A full program generated from a thought chain plus its evaluation."""

    source: str
    origin_node: ThoughtNode = field(repr=False)
    v_test: float = 0.0
    v_llm: Optional[float] = None
    reward: float = 0.0
    failed_cases: list[tuple[TestCase, str]] = field(default_factory=list)
    rollout_index: int = 0
    error: Optional[str] = None


@dataclass
class TraceBlock:
    """Static descriptor of one basic block of the subject program."""

    block_index: int
    start_line: int
    end_line: int
    source: str
    vars_after: dict[str, str] = field(default_factory=dict)


@dataclass
class BlockTraceReport:
    """Per-basic-block execution record for one test, as emitted by the trace
    harness (schema_version 1). ``snapshots`` holds one vars_after map per
    block execution, in execution order; ``blocks[].vars_after`` is the final
    snapshot for that block.
    """

    status: str = "ok"
    stdout: str = ""
    stderr: str = ""
    blocks: list[TraceBlock] = field(default_factory=list)
    executed_sequence: list[int] = field(default_factory=list)
    snapshots: list[dict[str, Any]] = field(default_factory=list)
    truncated: bool = False
    schema_version: int = 1

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "BlockTraceReport":
        blocks = [
            TraceBlock(
                block_index=int(b["block_index"]),
                start_line=int(b["start_line"]),
                end_line=int(b["end_line"]),
                source=str(b.get("source", "")),
                vars_after={str(k): str(v) for k, v in b.get("vars_after", {}).items()},
            )
            for b in data.get("blocks", [])
        ]
        return cls(
            status=str(data.get("status", "ok")),
            stdout=str(data.get("stdout", "")),
            stderr=str(data.get("stderr", "")),
            blocks=blocks,
            executed_sequence=[int(i) for i in data.get("executed_sequence", [])],
            snapshots=list(data.get("snapshots", [])),
            truncated=bool(data.get("truncated", False)),
            schema_version=int(data.get("schema_version", 1)),
        )


class Granularity(str, Enum):
    THOUGHT = "thought"
    CODE = "code"


@dataclass
class RunConfig:
    """Search hyperparameters and ablation flags.

    w_test/w_llm are the dual-reward mixing weights (must sum to 1); c_base
    and c_explore parameterize the exploration weight of the P-UCB rule.
    """

    max_rollouts: int = 16
    max_children: int = 3
    c_base: float = 10.0
    c_explore: float = 4.0
    w_test: float = 0.8
    w_llm: float = 0.2
    max_depth: int = 4
    rethink_limit_per_node: int = 1
    verbal_feedback: bool = True
    block_info: bool = True
    rethink: bool = True
    self_eval: bool = True
    gen_tests_eval: bool = False
    granularity: Granularity = Granularity.THOUGHT
    seed: int = 0
    exec_timeout: float = 10.0
    model_name: str = "gpt-4o-mini"
    temperature: float = 0.7
    early_stop: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.granularity, str):
            self.granularity = Granularity(self.granularity)
        if abs(self.w_test + self.w_llm - 1.0) > 1e-9:
            raise ValueError("w_test + w_llm must equal 1")
        if min(self.w_test, self.w_llm, self.c_base, self.c_explore) < 0:
            raise ValueError("weights and exploration constants must be >= 0")
        if self.c_base <= 0:
            raise ValueError("c_base must be > 0")
        if self.max_rollouts < 1:
            raise ValueError("max_rollouts must be >= 1")
