"""Pydantic request/response models for the HTTP API."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class CorpusCreate(BaseModel):
    corpus_id: str
    path: str


class IndexCreate(BaseModel):
    corpus_id: str
    kind: str  # bm25 | flat | hnsw | disk
    params: dict[str, Any] = Field(default_factory=dict)
    index_id: str = ""


class TemplateDoc(BaseModel):
    mode: str
    source: str


class GenParamsDoc(BaseModel):
    max_new_tokens: int = 256
    temperature: float = 0.0
    stop_sequences: list[str] = Field(default_factory=list)


class ActionDoc(BaseModel):
    operator: str
    template: TemplateDoc
    retriever_ref: str = ""
    top_k: int = 5
    gen_params: Optional[GenParamsDoc] = None


class ChainDoc(BaseModel):
    chain_id: str
    name: str = ""
    dataset_tag: str = ""
    actions: list[ActionDoc] = Field(default_factory=list)


class ContextBody(BaseModel):
    question: str = ""
    response: list[str] = Field(default_factory=list)
    wiki_id_title: list[str] = Field(default_factory=list)


class InstanceHighlight(BaseModel):
    golds: list[str] = Field(default_factory=list)
    provenance_ids: list[str] = Field(default_factory=list)


class RenderRequest(BaseModel):
    context: ContextBody = Field(default_factory=ContextBody)


class ExecuteActionRequest(BaseModel):
    context: ContextBody = Field(default_factory=ContextBody)
    instance: Optional[InstanceHighlight] = None


class ExecuteChainRequest(BaseModel):
    question: str
    instance: Optional[InstanceHighlight] = None


class HighlightRequest(BaseModel):
    text: str
    golds: list[str] = Field(default_factory=list)
    provenance_ids: list[str] = Field(default_factory=list)


class EvalCreate(BaseModel):
    chain_id: str
    dataset: str
    metrics: list[str]
    limit: Optional[int] = None
    concurrency: Optional[int] = None


class DatasetCreate(BaseModel):
    tag: str
    path: str


class ChatSessionCreate(BaseModel):
    chain_id: str


class ChatMessageCreate(BaseModel):
    text: str


class SpanOut(BaseModel):
    start: int
    end: int
    kind: str


class HitOut(BaseModel):
    passage_id: int
    score: float
    wiki_id: str
    title: str
    text: str = ""
    provenance_hit: bool = False
    text_spans: list["SpanOut"] = Field(default_factory=list)


class TraceOut(BaseModel):
    action_index: int
    operator: str
    rendered_prompt: str
    output: str
    hits: list[HitOut] = Field(default_factory=list)
    latency_s: float = 0.0
    highlight_spans: list[SpanOut] = Field(default_factory=list)


class RenderOut(BaseModel):
    chain_id: str
    action_index: int
    rendered_prompt: str


class ExecuteActionOut(BaseModel):
    trace: TraceOut
    context: ContextBody


class ExecuteChainOut(BaseModel):
    chain_id: str
    question: str
    answer: str
    traces: list[TraceOut]
    context: ContextBody = Field(default_factory=ContextBody)


class JobOut(BaseModel):
    job_id: str
    chain_id: str
    dataset: str
    state: str
    completed: int = 0
    total: int = 0
    run_id: str = ""
    error: str = ""


class ChatSessionOut(BaseModel):
    session_id: str
    chain_id: str
    turns: list[dict[str, str]] = Field(default_factory=list)


class ChatTurnOut(BaseModel):
    session_id: str
    reply: str
    turns: list[dict[str, str]]
    traces: list[TraceOut]


class ErrorBody(BaseModel):
    code: str
    message: str
    span: Optional[tuple[int, int]] = None
