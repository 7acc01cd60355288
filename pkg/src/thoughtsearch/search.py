"""The tree-search loop over coding thoughts: selection, expansion, evaluation
dispatch, backpropagation, and in-place repair of faulty thoughts (rethink).

One rollout = one code-generation-plus-evaluation cycle. A rethink cycle
regenerates the evaluated leaf's thought from execution feedback (ancestors
untouched) and consumes its own rollout unit, so budget comparisons between
"more rollouts" and "more rethinks" are apples to apples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .core import (
    CandidateProgram,
    Granularity,
    ProblemSpec,
    RunConfig,
    ThoughtNode,
    add_child,
    make_root,
    thought_chain,
    validate_problem,
)
from .evaluator import RewardSignal
from .gateway import GatewayError, LlmGateway
from .sandbox import Sandbox, SandboxError


class BudgetExhausted(RuntimeError):
    """A rollout was requested after max_rollouts was reached."""


@dataclass
class SearchState:
    tree_root: ThoughtNode
    rollouts_used: int = 0
    candidates: list[CandidateProgram] = field(default_factory=list)
    rng_seed: int = 0
    rethinks_used: int = 0
    events: list[dict[str, Any]] = field(default_factory=list)

    def log(self, event: str, **payload: Any) -> None:
        self.events.append({"event": event, **payload})


@dataclass
class SearchResult:
    best: CandidateProgram
    tree_root: ThoughtNode
    candidates: list[CandidateProgram]
    rollouts_used: int
    rethinks_used: int
    events: list[dict[str, Any]]


# --------------------------------------------------------------------------
# bandit arithmetic (natural logarithm throughout)


def compute_beta(parent_visits: int, c_base: float, c_explore: float) -> float:
    """Exploration weight: grows slowly with the parent's visit count."""
    if c_base <= 0:
        raise ValueError("c_base must be > 0")
    return math.log((parent_visits + c_base + 1) / c_base) + c_explore


def compute_p_ucb(
    q: float, prior: float, parent_visits: int, child_visits: int, cfg: RunConfig
) -> float:
    """Prior-weighted UCB of one child; requires parent_visits >= 1."""
    beta = compute_beta(parent_visits, cfg.c_base, cfg.c_explore)
    return q + beta * prior * math.sqrt(math.log(parent_visits)) / (1 + child_visits)


def select_path(root: ThoughtNode, cfg: RunConfig) -> ThoughtNode:
    """Walk from the root, taking the child with the highest P-UCB at every
    internal node (ties go to the lowest node_id), until a leaf or max_depth."""
    node = root
    while node.children and node.depth < cfg.max_depth:
        node = min(
            node.children,
            key=lambda c: (-compute_p_ucb(c.q_value, c.prior, node.visits, c.visits, cfg), c.node_id),
        )
    return node


def backpropagate(node: ThoughtNode, reward: float) -> None:
    """Max-update the Q values and bump visit counts from ``node`` up to the
    root. Verbal feedback stays on the evaluated leaf only."""
    if not 0.0 <= reward <= 1.0:
        raise ValueError("reward must lie in [0, 1]")
    cur: Optional[ThoughtNode] = node
    while cur is not None:
        cur.q_value = max(cur.q_value, reward)
        cur.visits += 1
        cur = cur.parent


# --------------------------------------------------------------------------
# expansion / evaluation / rethink


def expand_node(
    leaf: ThoughtNode, cfg: RunConfig, gateway: LlmGateway, problem: ProblemSpec
) -> list[ThoughtNode]:
    """Ask for up to max_children scored next thoughts and attach them.

    When the leaf carries feedback from a failed evaluation (and the ablation
    flag allows), the proposal prompt is conditioned on that feedback. An
    empty proposal list marks the leaf terminal.
    """
    if leaf.depth >= cfg.max_depth:
        raise ValueError("cannot expand a node at max_depth")
    if leaf.children:
        raise ValueError("leaf already expanded")
    feedback = leaf.feedback if cfg.verbal_feedback else None
    proposals = gateway.propose_thoughts(
        problem, thought_chain(leaf), feedback, k=cfg.max_children
    )
    if not proposals:
        leaf.terminal = True
        return []
    return [add_child(leaf, p.thought, p.score) for p in proposals[: cfg.max_children]]


def _evaluate_and_record(
    state: SearchState,
    node: ThoughtNode,
    program: str,
    signal: RewardSignal,
    cfg: RunConfig,
) -> CandidateProgram:
    node.feedback = signal.feedback
    node.last_v_test = signal.v_test
    state.log(
        "evaluation",
        node_id=node.node_id,
        rollout_index=state.rollouts_used,
        v_test=signal.v_test,
        v_llm=signal.v_llm,
        reward=signal.reward,
        error=signal.error,
    )
    backpropagate(node, signal.reward)
    state.log("backprop", node_id=node.node_id, reward=signal.reward)
    candidate = CandidateProgram(
        source=program,
        origin_node=node,
        v_test=signal.v_test,
        v_llm=signal.v_llm,
        reward=signal.reward,
        failed_cases=list(signal.failed_cases),
        rollout_index=state.rollouts_used,
        error=signal.error,
    )
    state.rollouts_used += 1
    state.candidates.append(candidate)
    return candidate


def _error_candidate(
    state: SearchState, node: ThoughtNode, error: str, cfg: RunConfig
) -> CandidateProgram:
    signal = RewardSignal(v_test=0.0, reward=0.0, error=error)
    return _evaluate_and_record(state, node, "", signal, cfg)


def run_rollout(
    state: SearchState,
    cfg: RunConfig,
    gateway: LlmGateway,
    sandbox: Sandbox,
    evaluator,
    problem: ProblemSpec,
) -> CandidateProgram:
    """One full cycle: select, expand, generate code from the chain, evaluate,
    backpropagate; then rethink the leaf while it keeps failing and budget
    allows. Sandbox/gateway failures yield a reward-0 candidate but still
    consume the rollout."""
    if state.rollouts_used >= cfg.max_rollouts:
        raise BudgetExhausted(f"rollout budget of {cfg.max_rollouts} exhausted")

    if cfg.granularity == Granularity.CODE:
        node = add_child(state.tree_root, "", 1.0)
        state.log("selection", node_id=state.tree_root.node_id, leaf=False)
        state.log("expansion", parent_id=state.tree_root.node_id, child_ids=[node.node_id])
        try:
            program = gateway.generate_program(problem, [])
            node.thought = program
            signal = evaluator.evaluate_candidate(program, problem, cfg, sandbox, gateway)
        except (GatewayError, SandboxError) as exc:
            candidate = _error_candidate(state, node, str(exc), cfg)
        else:
            candidate = _evaluate_and_record(state, node, program, signal, cfg)
        return _maybe_rethink(candidate, state, cfg, gateway, sandbox, evaluator, problem)

    leaf = select_path(state.tree_root, cfg)
    state.log("selection", node_id=leaf.node_id, depth=leaf.depth)

    node = leaf
    if not leaf.terminal and leaf.depth < cfg.max_depth and not leaf.children:
        try:
            children = expand_node(leaf, cfg, gateway, problem)
        except GatewayError as exc:
            return _error_candidate(state, leaf, f"expansion failed: {exc}", cfg)
        state.log(
            "expansion",
            parent_id=leaf.node_id,
            child_ids=[c.node_id for c in children],
            priors=[c.prior for c in children],
        )
        if children:
            # Evaluate the model's own top-ranked proposal; ties by node_id.
            node = min(children, key=lambda c: (-c.prior, c.node_id))

    try:
        program = gateway.generate_program(problem, thought_chain(node))
        signal = evaluator.evaluate_candidate(program, problem, cfg, sandbox, gateway)
    except (GatewayError, SandboxError) as exc:
        candidate = _error_candidate(state, node, str(exc), cfg)
    else:
        candidate = _evaluate_and_record(state, node, program, signal, cfg)
    return _maybe_rethink(candidate, state, cfg, gateway, sandbox, evaluator, problem)


def _maybe_rethink(
    candidate: CandidateProgram,
    state: SearchState,
    cfg: RunConfig,
    gateway: LlmGateway,
    sandbox: Sandbox,
    evaluator,
    problem: ProblemSpec,
) -> CandidateProgram:
    node = candidate.origin_node
    while (
        cfg.rethink
        and candidate.v_test < 1.0
        and node.feedback is not None
        and node.rethink_count < cfg.rethink_limit_per_node
        and not node.children
        and state.rollouts_used < cfg.max_rollouts
    ):
        candidate = rethink_node(node, state, cfg, gateway, sandbox, evaluator, problem)
    return candidate


def rethink_node(
    leaf: ThoughtNode,
    state: SearchState,
    cfg: RunConfig,
    gateway: LlmGateway,
    sandbox: Sandbox,
    evaluator,
    problem: ProblemSpec,
) -> CandidateProgram:
    """Regenerate the leaf's thought in place from its execution feedback,
    then re-generate and re-evaluate the program. Ancestors are never
    touched; a failed regeneration keeps the old thought but still counts."""
    if leaf.feedback is None:
        raise ValueError("rethink requires stored feedback")
    if leaf.last_v_test is None or leaf.last_v_test >= 1.0:
        raise ValueError("rethink only applies after a failing evaluation")
    if leaf.rethink_count >= cfg.rethink_limit_per_node:
        raise ValueError("rethink limit reached for this node")
    if leaf.children:
        raise ValueError("rethink applies to leaves only")
    if state.rollouts_used >= cfg.max_rollouts:
        raise BudgetExhausted(f"rollout budget of {cfg.max_rollouts} exhausted")

    parent_chain = thought_chain(leaf.parent) if leaf.parent is not None else []
    old_thought = leaf.thought
    state.rethinks_used += 1
    leaf.rethink_count += 1
    try:
        new_thought = gateway.regenerate_thought(
            problem,
            parent_chain,
            old_thought,
            leaf.feedback,
            include_block_info=cfg.block_info,
        )
    except GatewayError as exc:
        state.log(
            "rethink", node_id=leaf.node_id, replaced=False, error=str(exc)
        )
        return _error_candidate(state, leaf, f"rethink regeneration failed: {exc}", cfg)

    leaf.thought = new_thought
    state.log("rethink", node_id=leaf.node_id, replaced=True, old_thought=old_thought)
    try:
        if cfg.granularity == Granularity.CODE:
            program = new_thought
        else:
            program = gateway.generate_program(problem, thought_chain(leaf))
        signal = evaluator.evaluate_candidate(program, problem, cfg, sandbox, gateway)
    except (GatewayError, SandboxError) as exc:
        return _error_candidate(state, leaf, str(exc), cfg)
    return _evaluate_and_record(state, leaf, program, signal, cfg)


# --------------------------------------------------------------------------
# the full search


def run_search(
    problem: ProblemSpec,
    cfg: RunConfig,
    gateway: LlmGateway,
    sandbox: Sandbox,
    evaluator=None,
) -> SearchResult:
    """Repeat rollouts until the budget is gone; return the best candidate
    (argmax reward, ties by higher v_test then earliest rollout), the full
    tree and every candidate."""
    check = validate_problem(problem)
    if not check.ok:
        raise ValueError(f"invalid problem {problem.id!r}: {'; '.join(check.violations)}")
    if evaluator is None:
        from . import evaluator as evaluator  # the module satisfies the interface

    state = SearchState(tree_root=make_root(), rng_seed=cfg.seed)
    perfect = cfg.w_test + cfg.w_llm
    while state.rollouts_used < cfg.max_rollouts:
        candidate = run_rollout(state, cfg, gateway, sandbox, evaluator, problem)
        if cfg.early_stop and candidate.reward >= perfect:
            break

    best = best_candidate(state.candidates)
    if best is None:
        best = CandidateProgram(source="", origin_node=state.tree_root, error="all rollouts failed")
    return SearchResult(
        best=best,
        tree_root=state.tree_root,
        candidates=state.candidates,
        rollouts_used=state.rollouts_used,
        rethinks_used=state.rethinks_used,
        events=state.events,
    )


def best_candidate(candidates: list[CandidateProgram]) -> Optional[CandidateProgram]:
    if not candidates:
        return None
    return min(candidates, key=lambda c: (-c.reward, -c.v_test, c.rollout_index))
