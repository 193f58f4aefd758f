import json

import httpx
import pytest

from raglab.errors import BackendError, ContextOverflowError, TransportError
from raglab.llm import GenerationParams, LlmBackendConfig, LlmGateway


def mock_llm(rules=None, fallback=None, **overrides):
    cfg = LlmBackendConfig(kind="mock", mock_rules=rules or [],
                           mock_fallback=fallback or {"mode": "echo-last-line"},
                           **overrides)
    return LlmGateway(cfg)


class TestMockBackend:
    def test_rule_match(self):
        llm = mock_llm(rules=[("capital of France", "Paris")])
        out = llm.generate("What is the capital of France?\n\nAnswer: ")
        assert out.text == "Paris"

    def test_first_rule_wins(self):
        llm = mock_llm(rules=[("France", "first"), ("capital", "second")])
        assert llm.generate("capital of France").text == "first"

    def test_echo_last_line_fallback(self):
        llm = mock_llm()
        assert llm.generate("Document:\n42\n\nAnswer: ").text == "42"

    def test_constant_fallback(self):
        llm = mock_llm(fallback={"mode": "constant", "text": "N/A"})
        assert llm.generate("anything").text == "N/A"

    def test_error_fallback(self):
        llm = mock_llm(fallback={"mode": "error", "text": "nope"})
        with pytest.raises(BackendError, match="nope"):
            llm.generate("anything")

    def test_deterministic(self):
        llm = mock_llm(rules=[("q", "a")])
        assert llm.generate("q?").text == llm.generate("q?").text

    def test_stop_sequences_stripped(self):
        llm = mock_llm(rules=[("q", "Paris\nQuestion: next")])
        out = llm.generate("q", GenerationParams(stop_sequences=["\nQuestion:"]))
        assert out.text == "Paris"
        assert "\nQuestion:" not in out.text

    def test_latency_and_tokens_recorded(self):
        llm = mock_llm(rules=[("q", "a b c d")])
        out = llm.generate("q" * 40)
        assert out.latency_s >= 0.0
        assert out.prompt_tokens == 10  # 40 chars / 4 per token
        assert out.completion_tokens >= 1

    def test_context_overflow(self):
        llm = mock_llm(rules=[("q", "a")], max_context_tokens=4)
        with pytest.raises(ContextOverflowError):
            llm.generate("x" * 100)

    def test_call_count(self):
        llm = mock_llm(rules=[("q", "a")])
        assert llm.call_count == 0
        llm.generate("q")
        llm.generate("q")
        assert llm.call_count == 2

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError):
            mock_llm(rules=[("q", "a")]).generate("")

    def test_default_params(self):
        params = GenerationParams()
        assert params.temperature == 0.0
        assert params.max_new_tokens == 256
        assert params.stop_sequences == []


class TestRemoteBackend:
    def make(self, handler, **overrides):
        cfg = LlmBackendConfig(kind="remote", endpoint_url="http://llm.test/v1",
                               model="m", **overrides)
        return LlmGateway(cfg, transport=httpx.MockTransport(handler))

    def test_completions_wire_format(self):
        seen = {}

        def handler(request):
            seen.update(json.loads(request.content))
            return httpx.Response(200, json={"choices": [{"text": "Paris"}]})

        llm = self.make(handler)
        out = llm.generate("capital?", GenerationParams(max_new_tokens=32))
        assert out.text == "Paris"
        assert seen["prompt"] == "capital?"
        assert seen["max_tokens"] == 32
        assert seen["temperature"] == 0.0  # zero temperature by default

    def test_chat_wire_format(self):
        def handler(request):
            body = json.loads(request.content)
            assert body["messages"] == [{"role": "user", "content": "hi"}]
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "hello"}}]})

        llm = self.make(handler, chat_format=True)
        assert llm.generate("hi").text == "hello"

    def test_backend_error_surfaced(self):
        llm = self.make(lambda r: httpx.Response(503, text="overloaded"))
        with pytest.raises(BackendError, match="503"):
            llm.generate("q")

    def test_transport_error(self):
        def handler(request):
            raise httpx.ConnectTimeout("timeout")

        llm = self.make(handler)
        with pytest.raises(TransportError):
            llm.generate("q")

    def test_stop_passthrough(self):
        def handler(request):
            body = json.loads(request.content)
            assert body["stop"] == ["###"]
            return httpx.Response(200, json={"choices": [{"text": "ok### tail"}]})

        llm = self.make(handler)
        out = llm.generate("q", GenerationParams(stop_sequences=["###"]))
        assert out.text == "ok"


def test_config_validation():
    with pytest.raises(ValueError):
        LlmBackendConfig(kind="remote")
    with pytest.raises(ValueError):
        LlmBackendConfig(kind="mock", mock_rules=[], mock_fallback={})
    with pytest.raises(ValueError):
        GenerationParams(max_new_tokens=0)
    with pytest.raises(ValueError):
        GenerationParams(temperature=-1)
