"""Embedding gateway: unit-norm vectors from a remote backend or a local mock.

The mock embedder is a pure function of its input string: unigrams and
bigrams of the tokenized text are feature-hashed into a fixed number of
buckets with deterministic signs, then L2-normalized. It exists so every
pipeline test runs without network access yet still produces stable,
discriminative vectors.

The remote backend speaks the de-facto embeddings API: POST
``{"input": [...], "model": "..."}`` returning
``{"data": [{"embedding": [...]}, ...]}``. The API key is read from an
environment variable named in the config.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field

import httpx
import numpy as np

from .bm25 import tokenize
from .corpus import Passage
from .errors import BackendError, ContractError, TransportError

MOCK_DIM = 64
DEFAULT_QUERY_PREFIX = "query: "
DEFAULT_PASSAGE_PREFIX = "passage: "

_WS_TOKEN_RE = re.compile(r"\S+")


@dataclass
class EmbeddingBackendConfig:
    kind: str = "mock"                      # "mock" | "remote"
    endpoint_url: str = ""
    model: str = ""
    dim: int = MOCK_DIM
    max_input_tokens: int = 512
    query_prefix: str = DEFAULT_QUERY_PREFIX
    passage_prefix: str = DEFAULT_PASSAGE_PREFIX
    api_key_env: str = "RAGLAB_EMBED_API_KEY"
    timeout_s: float = 120.0
    batch_size: int = 32

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"unknown embedding backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint_url:
            raise ValueError("remote embedding backend requires endpoint_url")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingBackendConfig":
        return cls(**d)


def truncate_tokens(text: str, max_tokens: int) -> str:
    """Cut after the max_tokens-th whitespace token, keeping original spacing.

    A local approximation: the gateway cannot run the backend's tokenizer.
    """
    count = 0
    for m in _WS_TOKEN_RE.finditer(text):
        count += 1
        if count == max_tokens:
            return text[:m.end()]
    return text


class EmbeddingGateway:
    """Produces unit-norm query/passage embeddings per the backend config."""

    def __init__(self, config: EmbeddingBackendConfig,
                 transport: httpx.BaseTransport | None = None):
        self.config = config
        self._client: httpx.Client | None = None
        if config.kind == "remote":
            headers = {}
            api_key = os.environ.get(config.api_key_env, "")
            if api_key:
                headers["Authorization"] = f"Bearer {api_key}"
            self._client = httpx.Client(timeout=config.timeout_s, headers=headers,
                                        transport=transport)

    @property
    def dim(self) -> int:
        return self.config.dim

    def embed_query(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("query text must be non-empty")
        full = truncate_tokens(self.config.query_prefix + text,
                               self.config.max_input_tokens)
        return self._embed_batch([full])[0]

    def embed_passages(self, passages: list[Passage]) -> np.ndarray:
        if not passages:
            raise ValueError("passages must be non-empty")
        texts = [
            truncate_tokens(self.config.passage_prefix + p.index_text(),
                            self.config.max_input_tokens)
            for p in passages
        ]
        return self._embed_batch(texts)

    def _embed_batch(self, texts: list[str]) -> np.ndarray:
        if self.config.kind == "mock":
            return np.stack([mock_embed(t, self.config.dim) for t in texts])
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.config.batch_size):
            out.append(self._remote_call(texts[start:start + self.config.batch_size]))
        vectors = np.concatenate(out, axis=0)
        return _normalize_rows(vectors)

    def _remote_call(self, batch: list[str]) -> np.ndarray:
        body = {"input": batch, "model": self.config.model}
        try:
            resp = self._client.post(self.config.endpoint_url, json=body)
        except httpx.HTTPError as e:
            raise TransportError(f"embedding backend unreachable: {e}") from None
        if resp.status_code != 200:
            raise BackendError(
                f"embedding backend returned {resp.status_code}: {resp.text[:500]}")
        try:
            data = resp.json()["data"]
            vectors = np.asarray([row["embedding"] for row in data], dtype=np.float32)
        except (KeyError, TypeError, ValueError) as e:
            raise ContractError(f"malformed embedding response: {e}") from None
        if vectors.ndim != 2 or vectors.shape[0] != len(batch):
            raise ContractError(
                f"embedding backend returned {vectors.shape[0] if vectors.ndim else 0} "
                f"vectors for {len(batch)} inputs")
        if vectors.shape[1] != self.config.dim:
            raise ContractError(
                f"embedding backend returned dim {vectors.shape[1]}, "
                f"declared {self.config.dim}")
        return vectors


def mock_embed(text: str, dim: int = MOCK_DIM) -> np.ndarray:
    """Feature-hash unigrams+bigrams into ``dim`` signed buckets, L2-normalize."""
    tokens = tokenize(text)
    features = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    v = np.zeros(dim, dtype=np.float32)
    for feat in features:
        h = int.from_bytes(
            hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest(), "little")
        bucket = h % dim
        sign = 1.0 if (h >> 32) & 1 else -1.0
        v[bucket] += sign
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        v[0] = 1.0
        return v
    return v / norm


def mock_feature_buckets(text: str, dim: int = MOCK_DIM) -> set[int]:
    """Buckets a text hashes into (lets tests build collision-free inputs)."""
    tokens = tokenize(text)
    features = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    out = set()
    for feat in features:
        h = int.from_bytes(
            hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest(), "little")
        out.add(h % dim)
    return out


def _normalize_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return vectors / norms
