"""Search-guided program synthesis: MCTS over natural-language coding
thoughts, dual test/model rewards, and execution-feedback thought repair."""

from .core import (
    BlockAnalysis,
    BlockTraceReport,
    CandidateProgram,
    Granularity,
    IoMode,
    ProblemSpec,
    RunConfig,
    TestCase,
    ThoughtNode,
    ValidationResult,
    VerbalFeedback,
    Verdict,
    validate_problem,
)
from .evaluator import (
    Metrics,
    RewardSignal,
    TreeStats,
    aggregate_metrics,
    build_verbal_feedback,
    compute_reward,
    evaluate_candidate,
    tree_statistics,
)
from .gateway import (
    ChatRequest,
    GatewayError,
    HttpChatBackend,
    LlmGateway,
    MockBackend,
    ReplayBackend,
    ScoredThought,
)
from .sandbox import ExecStatus, ExecutionOutcome, Sandbox, SandboxError, judge_output
from .search import (
    SearchResult,
    SearchState,
    backpropagate,
    compute_beta,
    compute_p_ucb,
    expand_node,
    rethink_node,
    run_rollout,
    run_search,
    select_path,
)

__version__ = "0.1.0"
