"""Text-generation gateway: remote HTTP completion backend or deterministic mock.

Temperature defaults to zero. The mock backend matches ordered substring
rules (first hit wins) with a configurable fallback, so chains built on it
are fully deterministic end to end. Every call increments a counter, which
lets tests assert that Identity actions never touch a backend.

Remote wire format is the de-facto completions API
(``{model, prompt, max_tokens, temperature, stop}`` returning
``{choices: [{text}]}``); a chat-shaped variant is a config flag. Token
counts are local estimates (chars / chars_per_token); exact tokenizer
parity is a non-goal.
"""

from __future__ import annotations

import math
import os
import threading
import time
from dataclasses import dataclass, field

import httpx

from .errors import BackendError, ContextOverflowError, ContractError, TransportError

DEFAULT_MAX_NEW_TOKENS = 256
DEFAULT_MAX_CONTEXT_TOKENS = 4096
DEFAULT_CHARS_PER_TOKEN = 4.0


@dataclass
class GenerationParams:
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    temperature: float = 0.0
    stop_sequences: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def to_dict(self) -> dict:
        return {"max_new_tokens": self.max_new_tokens,
                "temperature": self.temperature,
                "stop_sequences": list(self.stop_sequences)}

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationParams":
        return cls(max_new_tokens=d.get("max_new_tokens", DEFAULT_MAX_NEW_TOKENS),
                   temperature=d.get("temperature", 0.0),
                   stop_sequences=list(d.get("stop_sequences", [])))


@dataclass
class LlmBackendConfig:
    kind: str = "mock"                       # "mock" | "remote"
    endpoint_url: str = ""
    model: str = ""
    max_context_tokens: int = DEFAULT_MAX_CONTEXT_TOKENS
    chat_format: bool = False
    api_key_env: str = "RAGLAB_LLM_API_KEY"
    timeout_s: float = 120.0
    chars_per_token: float = DEFAULT_CHARS_PER_TOKEN
    mock_rules: list[tuple[str, str]] = field(default_factory=list)
    mock_fallback: dict = field(default_factory=lambda: {"mode": "echo-last-line"})
    mock_delay_s: float = 0.0  # simulated backend latency, for concurrency tests

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"unknown llm backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint_url:
            raise ValueError("remote llm backend requires endpoint_url")
        self.mock_rules = [tuple(r) for r in self.mock_rules]
        mode = self.mock_fallback.get("mode")
        if self.kind == "mock" and not self.mock_rules and mode is None:
            raise ValueError("mock llm backend requires rules or a fallback")
        if mode not in (None, "echo-last-line", "constant", "error"):
            raise ValueError(f"unknown mock fallback mode {mode!r}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["mock_rules"] = [list(r) for r in self.mock_rules]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LlmBackendConfig":
        return cls(**d)


@dataclass
class GenerationResult:
    text: str
    latency_s: float
    prompt_tokens: int
    completion_tokens: int


class LlmGateway:
    def __init__(self, config: LlmBackendConfig,
                 transport: httpx.BaseTransport | None = None):
        self.config = config
        self._count_lock = threading.Lock()
        self.call_count = 0
        self._client: httpx.Client | None = None
        if config.kind == "remote":
            headers = {}
            api_key = os.environ.get(config.api_key_env, "")
            if api_key:
                headers["Authorization"] = f"Bearer {api_key}"
            self._client = httpx.Client(timeout=config.timeout_s, headers=headers,
                                        transport=transport)

    def estimate_tokens(self, text: str) -> int:
        return math.ceil(len(text) / self.config.chars_per_token)

    def generate(self, prompt: str, params: GenerationParams | None = None) -> GenerationResult:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        params = params or GenerationParams()
        prompt_tokens = self.estimate_tokens(prompt)
        if prompt_tokens > self.config.max_context_tokens:
            raise ContextOverflowError(
                f"prompt estimate {prompt_tokens} tokens exceeds context window "
                f"{self.config.max_context_tokens}")
        with self._count_lock:
            self.call_count += 1
        start = time.perf_counter()
        if self.config.kind == "mock":
            text = self._mock_complete(prompt)
        else:
            text = self._remote_complete(prompt, params)
        latency = time.perf_counter() - start
        text = _strip_stop_sequences(text, params.stop_sequences)
        return GenerationResult(text=text, latency_s=latency,
                                prompt_tokens=prompt_tokens,
                                completion_tokens=self.estimate_tokens(text))

    def _mock_complete(self, prompt: str) -> str:
        if self.config.mock_delay_s > 0:
            time.sleep(self.config.mock_delay_s)
        for needle, completion in self.config.mock_rules:
            if needle in prompt:
                return completion
        fallback = self.config.mock_fallback
        mode = fallback.get("mode", "echo-last-line")
        if mode == "constant":
            return fallback.get("text", "")
        if mode == "error":
            raise BackendError(fallback.get("text", "mock backend error"))
        # echo-last-line: last line that has content and is not a
        # trailing "Answer:"-style cue
        for line in reversed(prompt.splitlines()):
            stripped = line.strip()
            if stripped and not stripped.endswith(":"):
                return stripped
        return ""

    def _remote_complete(self, prompt: str, params: GenerationParams) -> str:
        if self.config.chat_format:
            body = {
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
                "max_tokens": params.max_new_tokens,
                "temperature": params.temperature,
            }
        else:
            body = {
                "model": self.config.model,
                "prompt": prompt,
                "max_tokens": params.max_new_tokens,
                "temperature": params.temperature,
            }
        if params.stop_sequences:
            body["stop"] = list(params.stop_sequences)
        try:
            resp = self._client.post(self.config.endpoint_url, json=body)
        except httpx.HTTPError as e:
            raise TransportError(f"llm backend unreachable: {e}") from None
        if resp.status_code != 200:
            raise BackendError(f"llm backend returned {resp.status_code}: {resp.text[:500]}")
        try:
            choice = resp.json()["choices"][0]
            return choice["message"]["content"] if self.config.chat_format else choice["text"]
        except (KeyError, IndexError, TypeError) as e:
            raise ContractError(f"malformed llm response: {e}") from None


def _strip_stop_sequences(text: str, stops: list[str]) -> str:
    cut = len(text)
    for stop in stops:
        if not stop:
            continue
        pos = text.find(stop)
        if pos != -1:
            cut = min(cut, pos)
    return text[:cut]
