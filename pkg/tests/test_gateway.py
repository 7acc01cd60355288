from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from thoughtsearch.core import BlockTraceReport, TraceBlock, VerbalFeedback, Verdict, TestCase
from thoughtsearch.gateway import (
    AuthError,
    ChatRequest,
    HttpChatBackend,
    LlmGateway,
    MockBackend,
    NoCodeBlockError,
    ParseError,
    RateLimitError,
    ReplayBackend,
    ReplayExhausted,
    extract_code_block,
    extract_json_array,
    fp_generate,
    fp_propose,
    last_number,
)

from conftest import fenced, make_problem


class TestParsing:
    def test_first_fence_wins(self):
        text = "prose\n```python\nfirst\n```\nmore\n```python\nsecond\n```"
        assert extract_code_block(text) == "first\n"

    def test_prose_around_fence_stripped(self):
        text = "Here you go:\n```\nprint(1)\n```\nHope it helps!"
        assert extract_code_block(text) == "print(1)\n"

    def test_no_fence_returns_none(self):
        assert extract_code_block("no code here") is None

    def test_json_array_from_fence(self):
        reply = '```json\n[{"thought": "t", "score": 0.5}]\n```'
        assert extract_json_array(reply) == [{"thought": "t", "score": 0.5}]

    def test_json_array_from_bare_text(self):
        reply = 'Sure: [1, 2, 3] is the list.'
        assert extract_json_array(reply) == [1, 2, 3]

    def test_last_number_extracted(self):
        assert last_number("score: 0.85, confidence high. Final: 0.9") == 0.9
        assert last_number("no digits") is None

    @given(st.floats(min_value=0, max_value=1, allow_nan=False))
    def test_last_number_round_trips_decimals(self, x):
        assert last_number(f"the score is {x!r}") == pytest.approx(x)


class TestChatRequest:
    def test_requires_messages(self):
        with pytest.raises(ValueError):
            ChatRequest(model_name="m", messages=[])

    def test_first_message_must_be_system(self):
        with pytest.raises(ValueError):
            ChatRequest(model_name="m", messages=[{"role": "user", "content": "hi"}])


class TestReplayBackend:
    def test_exact_key_preferred_over_wildcard(self):
        backend = ReplayBackend({"c:abc": ["exact"], "c:*": ["wild"]})
        req = ChatRequest(model_name="m", messages=[{"role": "system", "content": "s"}])
        assert backend.complete(req, "c", "abc") == "exact"
        assert backend.complete(req, "c", "abc") == "wild"

    def test_exhaustion_raises(self):
        backend = ReplayBackend({})
        req = ChatRequest(model_name="m", messages=[{"role": "system", "content": "s"}])
        with pytest.raises(ReplayExhausted):
            backend.complete(req, "c", "x")

    def test_fingerprints_are_stable(self):
        assert fp_propose("p", ["a"], True) == fp_propose("p", ["a"], True)
        assert fp_propose("p", ["a"], True) != fp_propose("p", ["a"], False)
        assert fp_generate("p", []) != fp_generate("q", [])


class TestProposeThoughts:
    def test_scripted_items_echoed(self, double_problem):
        items = [
            {"thought": "parse the input", "score": 0.9},
            {"thought": "print twice the value", "score": 0.8},
            {"thought": "handle whitespace", "score": 0.4},
        ]
        fix = {"propose_thoughts:*": ["```json\n" + json.dumps(items) + "\n```"]}
        gw = LlmGateway(ReplayBackend(fix))
        out = gw.propose_thoughts(double_problem, [], None, k=3)
        assert [(t.thought, t.score) for t in out] == [
            ("parse the input", 0.9),
            ("print twice the value", 0.8),
            ("handle whitespace", 0.4),
        ]

    def test_malformed_then_valid_succeeds_after_one_retry(self, double_problem):
        good = json.dumps([{"thought": "ok", "score": 0.5}])
        fix = {"propose_thoughts:*": ["not json at all", good]}
        gw = LlmGateway(ReplayBackend(fix))
        out = gw.propose_thoughts(double_problem, [], None, k=1)
        assert len(out) == 1 and out[0].thought == "ok"
        # the retry request embeds the failed reply plus a corrective nudge
        assert len(gw.recorded_prompts) == 2
        assert "not json at all" in gw.recorded_prompts[1].messages[-2]["content"]

    def test_two_malformed_replies_give_empty_list(self, double_problem):
        fix = {"propose_thoughts:*": ["garbage", "more garbage"]}
        gw = LlmGateway(ReplayBackend(fix))
        assert gw.propose_thoughts(double_problem, [], None, k=2) == []

    def test_scores_clamped(self, double_problem):
        items = [{"thought": "t1", "score": 1.7}, {"thought": "t2", "score": -3}]
        fix = {"propose_thoughts:*": [json.dumps(items)]}
        gw = LlmGateway(ReplayBackend(fix))
        out = gw.propose_thoughts(double_problem, [], None, k=2)
        assert [t.score for t in out] == [1.0, 0.0]

    def test_truncated_to_k(self, double_problem):
        items = [{"thought": f"t{i}", "score": 0.5} for i in range(5)]
        fix = {"propose_thoughts:*": [json.dumps(items)]}
        gw = LlmGateway(ReplayBackend(fix))
        assert len(gw.propose_thoughts(double_problem, [], None, k=2)) == 2

    def test_feedback_embedded_in_prompt(self, double_problem):
        feedback = VerbalFeedback(
            failed_test=TestCase("3\n", "6"),
            actual_output="9",
            summary="Failed public test case.\ntest input: 3\nexpected output: 6\nactual output: 9",
        )
        fix = {"propose_thoughts:*": [json.dumps([{"thought": "fix it", "score": 0.5}])]}
        gw = LlmGateway(ReplayBackend(fix))
        gw.propose_thoughts(double_problem, ["earlier step"], feedback, k=1)
        prompt = gw.recorded_prompts[0].messages[-1]["content"]
        assert "test input: 3" in prompt
        assert "earlier step" in prompt

    def test_k_must_be_positive(self, double_problem):
        gw = LlmGateway(ReplayBackend({}))
        with pytest.raises(ValueError):
            gw.propose_thoughts(double_problem, [], None, k=0)


class TestGenerateProgram:
    def test_fence_contents_only(self, double_problem):
        fix = {"generate_program:*": ["Sure!\n```python\nprint(42)\n```\nEnjoy."]}
        gw = LlmGateway(ReplayBackend(fix))
        assert gw.generate_program(double_problem, []) == "print(42)\n"

    def test_first_of_two_fences_wins(self, double_problem):
        reply = "```python\nprint(1)\n```\n```python\nprint(2)\n```"
        gw = LlmGateway(ReplayBackend({"generate_program:*": [reply]}))
        assert gw.generate_program(double_problem, []) == "print(1)\n"

    def test_no_fence_after_retry_raises(self, double_problem):
        gw = LlmGateway(ReplayBackend({"generate_program:*": ["nope", "still nope"]}))
        with pytest.raises(NoCodeBlockError):
            gw.generate_program(double_problem, [])

    def test_starter_code_prepended_when_missing(self):
        problem = make_problem()
        problem.starter_code = "import sys"
        fix = {"generate_program:*": [fenced("print(input())\n")]}
        gw = LlmGateway(ReplayBackend(fix))
        out = gw.generate_program(problem, [])
        assert out.startswith("import sys\n")

    def test_starter_code_not_duplicated(self):
        problem = make_problem()
        problem.starter_code = "n = int(input())"
        fix = {"generate_program:*": [fenced("n = int(input())\nprint(2 * n)\n")]}
        gw = LlmGateway(ReplayBackend(fix))
        out = gw.generate_program(problem, [])
        assert out.count("n = int(input())") == 1


class TestSelfEvaluate:
    def test_plain_decimal(self, double_problem):
        gw = LlmGateway(ReplayBackend({"self_evaluate:*": ["0.85"]}))
        assert gw.self_evaluate_program(double_problem, "print(1)") == 0.85

    def test_clamped_above_one(self, double_problem):
        gw = LlmGateway(ReplayBackend({"self_evaluate:*": ["score: 1.7"]}))
        assert gw.self_evaluate_program(double_problem, "print(1)") == 1.0

    def test_gibberish_twice_falls_back_to_zero(self, double_problem):
        gw = LlmGateway(ReplayBackend({"self_evaluate:*": ["gibberish", "words only"]}))
        assert gw.self_evaluate_program(double_problem, "print(1)") == 0.0


def _feedback_with_blocks() -> VerbalFeedback:
    from thoughtsearch.core import BlockAnalysis

    return VerbalFeedback(
        failed_test=TestCase("3\n", "6"),
        actual_output="9",
        block_reports=[
            BlockAnalysis(
                block_index=1,
                line_span=(2, 2),
                source="print(n * n)",
                vars_after={"n": "3"},
                verdict=Verdict.INCORRECT,
                explanation="squares instead of doubling",
            )
        ],
        summary=(
            "Failed public test case.\ntest input: 3\nexpected output: 6\nactual output: 9\n"
            "Block-level analysis:\nBlock 1 (lines 2-2): incorrect - squares instead of doubling"
        ),
    )


class TestRegenerateThought:
    def test_replacement_returned_verbatim(self, double_problem):
        gw = LlmGateway(ReplayBackend({"regenerate_thought:*": ["Multiply by two instead."]}))
        out = gw.regenerate_thought(
            double_problem, [], "square the input", _feedback_with_blocks()
        )
        assert out == "Multiply by two instead."

    def test_prompt_contains_old_thought_and_blocks(self, double_problem):
        gw = LlmGateway(ReplayBackend({"regenerate_thought:*": ["better step"]}))
        gw.regenerate_thought(double_problem, [], "square the input", _feedback_with_blocks())
        prompt = gw.recorded_prompts[0].messages[-1]["content"]
        assert "square the input" in prompt
        assert "Block 1" in prompt

    def test_block_info_disabled_omits_verdict_lines(self, double_problem):
        gw = LlmGateway(ReplayBackend({"regenerate_thought:*": ["better step"]}))
        gw.regenerate_thought(
            double_problem,
            [],
            "square the input",
            _feedback_with_blocks(),
            include_block_info=False,
        )
        prompt = gw.recorded_prompts[0].messages[-1]["content"]
        assert "actual output: 9" in prompt
        assert "Block 1" not in prompt
        assert "incorrect" not in prompt

    def test_empty_replies_raise_after_retry(self, double_problem):
        gw = LlmGateway(ReplayBackend({"regenerate_thought:*": ["", "   "]}))
        with pytest.raises(ParseError):
            gw.regenerate_thought(double_problem, [], "old", _feedback_with_blocks())


def _trace_three_blocks() -> BlockTraceReport:
    return BlockTraceReport(
        status="wrong_output",
        stdout="9\n",
        blocks=[
            TraceBlock(0, 1, 1, "n = int(input())", {"n": "3"}),
            TraceBlock(1, 2, 2, "x = n * n", {"n": "3", "x": "9"}),
            TraceBlock(2, 3, 3, "print(x)", {"n": "3", "x": "9"}),
        ],
        executed_sequence=[0, 1, 2],
    )


class TestAnalyzeBlocks:
    def test_scripted_verdicts_mapped(self, double_problem):
        verdicts = [
            {"block_index": 0, "verdict": "correct", "explanation": "reads fine"},
            {"block_index": 1, "verdict": "incorrect", "explanation": "squares"},
            {"block_index": 2, "verdict": "correct", "explanation": "prints fine"},
        ]
        gw = LlmGateway(ReplayBackend({"analyze_blocks:*": [json.dumps(verdicts)]}))
        out = gw.analyze_blocks(
            double_problem, "prog", _trace_three_blocks(), TestCase("3\n", "6")
        )
        assert [a.verdict for a in out] == [Verdict.CORRECT, Verdict.INCORRECT, Verdict.CORRECT]
        assert out[1].line_span == (2, 2)

    def test_missing_blocks_default_to_unknown(self, double_problem):
        verdicts = [
            {"block_index": 0, "verdict": "correct", "explanation": ""},
            {"block_index": 1, "verdict": "incorrect", "explanation": "squares"},
        ]
        gw = LlmGateway(ReplayBackend({"analyze_blocks:*": [json.dumps(verdicts)]}))
        out = gw.analyze_blocks(
            double_problem, "prog", _trace_three_blocks(), TestCase("3\n", "6")
        )
        assert out[2].verdict == Verdict.UNKNOWN

    def test_unknown_indices_dropped(self, double_problem):
        verdicts = [{"block_index": 99, "verdict": "incorrect", "explanation": "x"}]
        gw = LlmGateway(ReplayBackend({"analyze_blocks:*": [json.dumps(verdicts)]}))
        out = gw.analyze_blocks(
            double_problem, "prog", _trace_three_blocks(), TestCase("3\n", "6")
        )
        assert all(a.verdict == Verdict.UNKNOWN for a in out)

    def test_unparseable_twice_gives_all_unknown(self, double_problem):
        gw = LlmGateway(ReplayBackend({"analyze_blocks:*": ["junk", "junk"]}))
        out = gw.analyze_blocks(
            double_problem, "prog", _trace_three_blocks(), TestCase("3\n", "6")
        )
        assert [a.verdict for a in out] == [Verdict.UNKNOWN] * 3
        assert all(a.explanation == "" for a in out)

    def test_empty_trace_rejected(self, double_problem):
        gw = LlmGateway(ReplayBackend({}))
        with pytest.raises(ValueError):
            gw.analyze_blocks(double_problem, "prog", BlockTraceReport(), TestCase("", ""))


class TestGenerateUnitTests:
    def test_pairs_parsed(self, double_problem):
        pairs = [
            {"input": "1\n", "expected_output": "2"},
            {"input": "2\n", "expected_output": "4"},
            {"input": "5\n", "expected_output": "10"},
        ]
        gw = LlmGateway(ReplayBackend({"generate_tests:*": [json.dumps(pairs)]}))
        out = gw.generate_unit_tests(double_problem, 3)
        assert [(t.input, t.expected_output) for t in out] == [
            ("1\n", "2"),
            ("2\n", "4"),
            ("5\n", "10"),
        ]

    def test_malformed_entries_dropped(self, double_problem):
        pairs = [
            {"input": "1\n", "expected_output": "2"},
            {"oops": True},
            {"input": "2\n", "expected_output": "4"},
        ]
        gw = LlmGateway(ReplayBackend({"generate_tests:*": [json.dumps(pairs)]}))
        assert len(gw.generate_unit_tests(double_problem, 3)) == 2

    def test_n_zero_returns_empty_without_calling(self, double_problem):
        gw = LlmGateway(ReplayBackend({}))
        assert gw.generate_unit_tests(double_problem, 0) == []
        assert gw.recorded_prompts == []


class TestMockBackend:
    def test_deterministic_given_seed(self, double_problem):
        a = LlmGateway(MockBackend(seed=3))
        b = LlmGateway(MockBackend(seed=3))
        pa = a.propose_thoughts(double_problem, [], None, k=3)
        pb = b.propose_thoughts(double_problem, [], None, k=3)
        assert [(t.thought, t.score) for t in pa] == [(t.thought, t.score) for t in pb]

    def test_program_is_runnable_python(self, double_problem):
        gw = LlmGateway(MockBackend(seed=0))
        program = gw.generate_program(double_problem, ["any thought"])
        compile(program, "<mock>", "exec")


class _FakeResponse:
    def __init__(self, status_code: int, payload=None, text: str = "") -> None:
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


class TestHttpBackend:
    def _request(self):
        return ChatRequest(
            model_name="m",
            messages=[{"role": "system", "content": "s"}, {"role": "user", "content": "u"}],
        )

    def test_missing_credential_fails_before_any_call(self, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        calls = []
        import requests

        monkeypatch.setattr(requests, "post", lambda *a, **k: calls.append(1))
        backend = HttpChatBackend()
        with pytest.raises(AuthError):
            backend.complete(self._request(), "c", "f")
        assert calls == []

    def test_two_429_then_200_succeeds_on_third_attempt(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "k")
        replies = [
            _FakeResponse(429),
            _FakeResponse(429),
            _FakeResponse(200, {"choices": [{"message": {"content": "hi"}}]}),
        ]
        import requests

        monkeypatch.setattr(requests, "post", lambda *a, **k: replies.pop(0))
        backend = HttpChatBackend(backoff_base=0.0)
        assert backend.complete(self._request(), "c", "f") == "hi"

    def test_persistent_429_raises_rate_limit(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "k")
        import requests

        monkeypatch.setattr(requests, "post", lambda *a, **k: _FakeResponse(429))
        backend = HttpChatBackend(backoff_base=0.0)
        with pytest.raises(RateLimitError):
            backend.complete(self._request(), "c", "f")

    def test_401_is_auth_error(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "bad")
        import requests

        monkeypatch.setattr(requests, "post", lambda *a, **k: _FakeResponse(401))
        backend = HttpChatBackend(backoff_base=0.0)
        with pytest.raises(AuthError):
            backend.complete(self._request(), "c", "f")

    def test_request_body_shape(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "k")
        captured = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            captured.update({"url": url, "json": json, "headers": headers})
            return _FakeResponse(200, {"choices": [{"message": {"content": "ok"}}]})

        import requests

        monkeypatch.setattr(requests, "post", fake_post)
        HttpChatBackend(base_url="https://example.test/v1").complete(self._request(), "c", "f")
        assert captured["url"] == "https://example.test/v1/chat/completions"
        assert set(captured["json"]) == {"model", "messages", "temperature", "max_tokens"}
        assert captured["headers"]["Authorization"] == "Bearer k"


class TestPromptHygiene:
    def test_private_tests_never_in_prompts(self, double_problem):
        fixtures = {
            "propose_thoughts:*": [json.dumps([{"thought": "t", "score": 0.5}])],
            "generate_program:*": [fenced("print(1)\n")],
            "self_evaluate:*": ["0.5"],
            "generate_tests:*": ["[]"],
        }
        gw = LlmGateway(ReplayBackend(fixtures))
        gw.propose_thoughts(double_problem, [], None, k=1)
        gw.generate_program(double_problem, ["t"])
        gw.self_evaluate_program(double_problem, "print(1)")
        gw.generate_unit_tests(double_problem, 2)
        corpus = "\n".join(
            m["content"] for rec in gw.recorded_prompts for m in rec.messages
        )
        for t in double_problem.private_tests:
            assert t.input.strip() not in corpus
            assert t.expected_output not in corpus
