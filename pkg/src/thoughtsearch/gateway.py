"""Model interactions: prompt construction, structured-output parsing, and the
chat-completions backends (live HTTP, deterministic mock, scripted replay).

Every operation retries a malformed reply exactly once with a corrective
re-prompt, then applies its stated fallback. Replay fixtures are keyed
``"<prompt_class>:<fingerprint>"`` with a ``"<prompt_class>:*"`` wildcard;
fingerprints hash the semantic state (problem id, thought chain, ...) so
fixtures survive template wording changes. All requests are recorded for
prompt-hygiene assertions.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from . import prompts
from .core import (
    BlockAnalysis,
    BlockTraceReport,
    IoMode,
    ProblemSpec,
    TestCase,
    VerbalFeedback,
    Verdict,
)


class GatewayError(Exception):
    """Base class for model-interaction failures."""


class AuthError(GatewayError):
    pass


class RateLimitError(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class ParseError(GatewayError):
    pass


class NoCodeBlockError(GatewayError):
    pass


class ReplayExhausted(GatewayError):
    """No scripted reply left for the requested key."""


@dataclass
class ChatRequest:
    model_name: str
    messages: list[dict[str, str]]
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if self.messages[0].get("role") != "system":
            raise ValueError("first message must have role 'system'")


@dataclass
class ScoredThought:
    thought: str
    score: float


class Backend(Protocol):
    def complete(self, request: ChatRequest, prompt_class: str, fingerprint: str) -> str: ...


# --------------------------------------------------------------------------
# fingerprints — stable keys for replay fixtures


def _digest(payload: object) -> str:
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=True)
    return hashlib.sha1(blob.encode()).hexdigest()[:12]


def fp_propose(problem_id: str, chain: Sequence[str], has_feedback: bool) -> str:
    return _digest(["propose", problem_id, list(chain), has_feedback])


def fp_generate(problem_id: str, chain: Sequence[str]) -> str:
    return _digest(["generate", problem_id, list(chain)])


def fp_self_eval(problem_id: str, program: str) -> str:
    return _digest(["self_eval", problem_id, hashlib.sha1(program.encode()).hexdigest()])


def fp_regenerate(problem_id: str, chain: Sequence[str], old_thought: str) -> str:
    return _digest(["regenerate", problem_id, list(chain), old_thought])


def fp_analyze(problem_id: str, program: str) -> str:
    return _digest(["analyze", problem_id, hashlib.sha1(program.encode()).hexdigest()])


def fp_gen_tests(problem_id: str, n: int) -> str:
    return _digest(["gen_tests", problem_id, n])


# --------------------------------------------------------------------------
# reply parsing

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\n(.*?)(?:```|\Z)", re.DOTALL)
_NUMBER_RE = re.compile(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")


def extract_code_block(text: str) -> Optional[str]:
    """Contents of the first fenced code block, or None."""
    m = _FENCE_RE.search(text)
    if m is None:
        return None
    block = m.group(1)
    return block if block.strip() else None


def extract_json_array(text: str) -> Optional[list]:
    """First well-formed JSON array in the reply (fenced blocks tried first)."""
    decoder = json.JSONDecoder()
    candidates = [m.group(1) for m in _FENCE_RE.finditer(text)] + [text]
    for chunk in candidates:
        for start in (i for i, ch in enumerate(chunk) if ch == "["):
            try:
                value, _ = decoder.raw_decode(chunk[start:])
            except json.JSONDecodeError:
                continue
            if isinstance(value, list):
                return value
    return None


def last_number(text: str) -> Optional[float]:
    matches = _NUMBER_RE.findall(text)
    if not matches:
        return None
    try:
        return float(matches[-1])
    except ValueError:
        return None


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


# --------------------------------------------------------------------------
# backends


class HttpChatBackend:
    """Chat-completions-compatible JSON over HTTPS.

    The credential is read from ``api_key_env`` (never passed on a command
    line); transient failures (HTTP 429/5xx and transport errors) are retried
    with exponential backoff, at most ``max_attempts`` attempts total.
    """

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key_env: str = "LLM_API_KEY",
        request_timeout: float = 120.0,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
    ) -> None:
        self.base_url = (base_url or os.environ.get("LLM_BASE_URL", "https://api.openai.com/v1")).rstrip("/")
        self.api_key_env = api_key_env
        self.request_timeout = request_timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base

    def complete(self, request: ChatRequest, prompt_class: str, fingerprint: str) -> str:
        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise AuthError(f"credential env var {self.api_key_env} is not set")

        import requests

        url = f"{self.base_url}/chat/completions"
        body = {
            "model": request.model_name,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        last_error: Optional[Exception] = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=self.request_timeout)
            except requests.RequestException as exc:
                last_error = TransportError(f"transport failure: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"authentication rejected (HTTP {resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = RateLimitError(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:500]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion payload: {exc}") from exc
        raise last_error if last_error is not None else TransportError("no attempts made")


class MockBackend:
    """Deterministic canned replies keyed off the prompt class; good enough to
    drive the whole engine without fixtures or network."""

    def __init__(self, seed: int = 0) -> None:
        self._rng = random.Random(seed)
        self._calls = 0

    def complete(self, request: ChatRequest, prompt_class: str, fingerprint: str) -> str:
        self._calls += 1
        user_text = request.messages[-1].get("content", "")
        if prompt_class == "propose_thoughts":
            m = re.search(r"exactly (\d+)", user_text)
            k = int(m.group(1)) if m else 3
            items = [
                {
                    "thought": f"Try approach {self._calls}.{i + 1}: solve the problem directly.",
                    "score": round(0.9 - 0.1 * i, 2),
                }
                for i in range(k)
            ]
            return "```json\n" + json.dumps(items) + "\n```"
        if prompt_class == "generate_program":
            m = re.search(r"function `(\w+)`", user_text)
            if m:
                body = f"def {m.group(1)}(*args):\n    return args[0] if args else None\n"
            else:
                body = "import sys\nprint(sys.stdin.read().strip())\n"
            return f"```python\n{body}```"
        if prompt_class == "self_evaluate":
            return "0.7"
        if prompt_class == "regenerate_thought":
            return f"Revised step {self._calls}: handle the failing input explicitly before the general case."
        return "[]"


class ReplayBackend:
    """Scripted replies consumed in order per key; raises ReplayExhausted when
    a key runs dry. Consumption is serialized internally."""

    def __init__(self, fixtures: dict[str, "str | list[str]"]) -> None:
        self._queues: dict[str, list[str]] = {
            key: list(value) if isinstance(value, list) else [value]
            for key, value in fixtures.items()
        }
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str) -> "ReplayBackend":
        with open(path) as f:
            return cls(json.load(f))

    def complete(self, request: ChatRequest, prompt_class: str, fingerprint: str) -> str:
        with self._lock:
            for key in (f"{prompt_class}:{fingerprint}", f"{prompt_class}:*"):
                queue = self._queues.get(key)
                if queue:
                    return queue.pop(0)
        raise ReplayExhausted(f"no scripted reply for {prompt_class}:{fingerprint}")


# --------------------------------------------------------------------------
# the gateway


_RETRY_NUDGE = (
    "Your previous reply could not be parsed. Follow the requested format "
    "exactly and reply again."
)

_DIVIDER = "-" * 20


@dataclass
class _RecordedPrompt:
    prompt_class: str
    fingerprint: str
    messages: list[dict[str, str]] = field(default_factory=list)


class LlmGateway:
    """All model operations used by the search engine.

    ``temperature`` applies to thought proposal, code generation and thought
    regeneration (diversity); self-evaluation, block analysis and test
    generation run at temperature 0 (stability).
    """

    def __init__(
        self,
        backend: Backend,
        model_name: str = "gpt-4o-mini",
        temperature: float = 0.7,
        max_tokens: int = 2048,
        record_prompts: Optional[bool] = None,
    ) -> None:
        self.backend = backend
        self.model_name = model_name
        self.temperature = temperature
        self.max_tokens = max_tokens
        if record_prompts is None:
            record_prompts = not isinstance(backend, HttpChatBackend)
        self.record_prompts = record_prompts
        self.recorded_prompts: list[_RecordedPrompt] = []

    # -------------------------------------------------------------- plumbing

    def complete_chat(
        self, request: ChatRequest, prompt_class: str = "adhoc", fingerprint: str = "-"
    ) -> str:
        if self.record_prompts:
            self.recorded_prompts.append(
                _RecordedPrompt(prompt_class, fingerprint, [dict(m) for m in request.messages])
            )
        return self.backend.complete(request, prompt_class, fingerprint)

    def _request(self, system: str, user: str, temperature: float) -> ChatRequest:
        return ChatRequest(
            model_name=self.model_name,
            messages=[{"role": "system", "content": system}, {"role": "user", "content": user}],
            temperature=temperature,
            max_tokens=self.max_tokens,
        )

    def _ask_with_retry(self, request: ChatRequest, prompt_class: str, fingerprint: str, parse):
        """One attempt plus one corrective re-prompt; returns (parsed, ok)."""
        reply = self.complete_chat(request, prompt_class, fingerprint)
        parsed = parse(reply)
        if parsed is not None:
            return parsed, True
        retry = ChatRequest(
            model_name=request.model_name,
            messages=request.messages
            + [{"role": "assistant", "content": reply}, {"role": "user", "content": _RETRY_NUDGE}],
            temperature=request.temperature,
            max_tokens=request.max_tokens,
        )
        reply = self.complete_chat(retry, prompt_class, fingerprint)
        parsed = parse(reply)
        return parsed, parsed is not None

    # ------------------------------------------------------------ operations

    def propose_thoughts(
        self,
        problem: ProblemSpec,
        thought_chain: Sequence[str],
        feedback: Optional[VerbalFeedback],
        k: int,
    ) -> list[ScoredThought]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if feedback is not None:
            user = prompts.render(
                "propose_thoughts_feedback_user",
                statement=problem.statement,
                chain_section=_chain_section(thought_chain),
                feedback=_feedback_section(feedback),
                k=str(k),
            )
        else:
            user = prompts.render(
                "propose_thoughts_user",
                statement=problem.statement,
                chain_section=_chain_section(thought_chain),
                k=str(k),
            )
        request = self._request(prompts.render("propose_thoughts_system"), user, self.temperature)
        fingerprint = fp_propose(problem.id, thought_chain, feedback is not None)

        def parse(reply: str) -> Optional[list[ScoredThought]]:
            items = extract_json_array(reply)
            if items is None:
                return None
            out: list[ScoredThought] = []
            for item in items:
                if not isinstance(item, dict):
                    continue
                thought = str(item.get("thought", "")).strip()
                score = item.get("score")
                if not thought or not isinstance(score, (int, float)):
                    continue
                out.append(ScoredThought(thought=thought, score=_clamp(score)))
            return out or None

        parsed, ok = self._ask_with_retry(request, "propose_thoughts", fingerprint, parse)
        return parsed[:k] if ok else []

    def generate_program(self, problem: ProblemSpec, thought_chain: Sequence[str]) -> str:
        user = prompts.render(
            "generate_program_user",
            statement=problem.statement,
            io_section=_io_section(problem),
            starter_section=_starter_section(problem),
            chain_section=_chain_section(thought_chain),
        )
        request = self._request(prompts.render("generate_program_system"), user, self.temperature)
        fingerprint = fp_generate(problem.id, thought_chain)

        parsed, ok = self._ask_with_retry(
            request, "generate_program", fingerprint, extract_code_block
        )
        if not ok:
            raise NoCodeBlockError("no code block in reply after retry")
        code = parsed.rstrip() + "\n"
        if problem.starter_code and _strip_ws(problem.starter_code) not in _strip_ws(code):
            code = problem.starter_code.rstrip() + "\n" + code
        return code

    def self_evaluate_program(self, problem: ProblemSpec, program: str) -> float:
        user = prompts.render("self_evaluate_user", statement=problem.statement, program=program)
        request = self._request(prompts.render("self_evaluate_system"), user, 0.0)
        fingerprint = fp_self_eval(problem.id, program)

        parsed, ok = self._ask_with_retry(request, "self_evaluate", fingerprint, last_number)
        return _clamp(parsed) if ok else 0.0

    def regenerate_thought(
        self,
        problem: ProblemSpec,
        thought_chain: Sequence[str],
        old_thought: str,
        feedback: VerbalFeedback,
        include_block_info: bool = True,
    ) -> str:
        if feedback is None:
            raise ValueError("regenerate_thought requires feedback")
        summary = feedback.summary
        block_section = ""
        if include_block_info and feedback.block_reports:
            block_section = "Per-block verdicts:\n" + _verdict_lines(feedback.block_reports)
        elif not include_block_info:
            summary = _strip_block_lines(summary)
        user = prompts.render(
            "regenerate_thought_user",
            statement=problem.statement,
            chain_section=_chain_section(thought_chain),
            old_thought=old_thought,
            feedback=summary,
            block_section=block_section,
        )
        request = self._request(prompts.render("regenerate_thought_system"), user, self.temperature)
        fingerprint = fp_regenerate(problem.id, thought_chain, old_thought)

        def parse(reply: str) -> Optional[str]:
            block = extract_code_block(reply)
            text = (block if block is not None else reply).strip()
            return text or None

        parsed, ok = self._ask_with_retry(request, "regenerate_thought", fingerprint, parse)
        if not ok:
            raise ParseError("empty replacement thought after retry")
        return parsed

    def analyze_blocks(
        self,
        problem: ProblemSpec,
        program: str,
        trace: BlockTraceReport,
        failed_test: TestCase,
    ) -> list[BlockAnalysis]:
        if not trace.blocks:
            raise ValueError("trace has no blocks")
        executed = set(trace.executed_sequence)
        shown = [b for b in trace.blocks if b.block_index in executed] or trace.blocks
        block_lines = []
        for b in shown:
            vars_repr = ", ".join(f"{k}={v}" for k, v in b.vars_after.items()) or "(none)"
            block_lines.append(
                f"block {b.block_index} (lines {b.start_line}-{b.end_line}):\n"
                f"{b.source.rstrip()}\nvariables after: {vars_repr}\n{_DIVIDER}"
            )
        user = prompts.render(
            "analyze_blocks_user",
            statement=problem.statement,
            program=program,
            test_input=failed_test.input,
            expected_output=failed_test.expected_output,
            actual_output=trace.stdout if trace.status == "wrong_output" else trace.stderr or trace.stdout,
            block_section="\n".join(block_lines),
        )
        request = self._request(prompts.render("analyze_blocks_system"), user, 0.0)
        fingerprint = fp_analyze(problem.id, program)

        parsed, ok = self._ask_with_retry(request, "analyze_blocks", fingerprint, extract_json_array)
        verdicts: dict[int, tuple[Verdict, str]] = {}
        if ok:
            known = {b.block_index for b in trace.blocks}
            for item in parsed:
                if not isinstance(item, dict):
                    continue
                try:
                    idx = int(item.get("block_index"))
                except (TypeError, ValueError):
                    continue
                if idx not in known:
                    continue
                raw = str(item.get("verdict", "")).strip().lower()
                verdict = Verdict(raw) if raw in (v.value for v in Verdict) else Verdict.UNKNOWN
                verdicts[idx] = (verdict, str(item.get("explanation", "")))
        return [
            BlockAnalysis(
                block_index=b.block_index,
                line_span=(b.start_line, b.end_line),
                source=b.source,
                vars_after=dict(b.vars_after),
                verdict=verdicts.get(b.block_index, (Verdict.UNKNOWN, ""))[0],
                explanation=verdicts.get(b.block_index, (Verdict.UNKNOWN, ""))[1],
            )
            for b in trace.blocks
        ]

    def generate_unit_tests(self, problem: ProblemSpec, n: int) -> list[TestCase]:
        if n <= 0:
            return []
        if problem.io_mode == IoMode.FUNCTIONAL:
            format_note = (
                "Each input is a Python literal of the argument tuple for "
                f"`{problem.entry_point}`, each expected_output the repr of the return value."
            )
        else:
            format_note = "Each input is the full stdin payload, each expected_output the exact stdout."
        user = prompts.render(
            "generate_tests_user",
            statement=problem.statement,
            io_section=_io_section(problem),
            k=str(n),
            format_note=format_note,
        )
        request = self._request(prompts.render("generate_tests_system"), user, 0.0)
        fingerprint = fp_gen_tests(problem.id, n)

        parsed, ok = self._ask_with_retry(request, "generate_tests", fingerprint, extract_json_array)
        if not ok:
            return []
        out: list[TestCase] = []
        for item in parsed:
            if not isinstance(item, dict):
                continue
            if "input" not in item or "expected_output" not in item:
                continue
            out.append(TestCase(input=str(item["input"]), expected_output=str(item["expected_output"])))
        return out[:n]


# --------------------------------------------------------------------------
# prompt section builders


def _chain_section(chain: Sequence[str]) -> str:
    if not chain:
        return "No thoughts yet; this is the first reasoning step."
    lines = [f"{i + 1}. {t}" for i, t in enumerate(chain)]
    return "Thoughts so far:\n" + "\n".join(lines)


def _io_section(problem: ProblemSpec) -> str:
    if problem.io_mode == IoMode.FUNCTIONAL:
        section = (
            f"Implement the function `{problem.entry_point}`. The test harness calls it "
            "with the test arguments and compares the repr of its return value."
        )
    else:
        section = "The program reads from standard input and writes the answer to standard output."
    examples = [
        f"example input:\n{t.input}\nexample expected output:\n{t.expected_output}"
        for t in problem.public_tests[:2]
    ]
    if examples:
        section += "\n\n" + "\n".join(examples)
    return section


def _starter_section(problem: ProblemSpec) -> str:
    if not problem.starter_code:
        return ""
    return f"Starter code (must appear in the program):\n```python\n{problem.starter_code.rstrip()}\n```"


def _feedback_section(feedback: VerbalFeedback) -> str:
    text = feedback.summary
    if feedback.block_reports:
        text += "\nPer-block verdicts:\n" + _verdict_lines(feedback.block_reports)
    return text


def _verdict_lines(reports: Sequence[BlockAnalysis]) -> str:
    lines = []
    for r in reports:
        vars_repr = ", ".join(f"{k}={v}" for k, v in r.vars_after.items())
        suffix = f" [vars after: {vars_repr}]" if vars_repr else ""
        lines.append(
            f"Block {r.block_index} (lines {r.line_span[0]}-{r.line_span[1]}): "
            f"{r.verdict.value}{' - ' + r.explanation if r.explanation else ''}{suffix}"
        )
    return "\n".join(lines)


def _strip_block_lines(summary: str) -> str:
    return "\n".join(ln for ln in summary.splitlines() if not ln.lstrip().startswith("Block "))


def _strip_ws(text: str) -> str:
    return "".join(text.split())
