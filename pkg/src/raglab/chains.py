"""Chains of LLM / Retriever / Identity actions over an execution context.

Each action renders its template against the context built by earlier
actions, then:

* ``Retriever`` searches its referenced index with the rendered string as
  the query; the retrieved document block becomes ``response[k]`` and the
  formatted hit list ("{title}, {wiki_id}" entries joined by "; ") becomes
  ``wiki_id_title[k]``.
* ``LLM`` sends the rendered prompt to the generation backend; the
  completion becomes ``response[k]``.
* ``Identity`` emits the rendered prompt verbatim (no backend call) — the
  final-answer extractor pattern for entity linking.

Rendering an action never touches a backend, so prompts can be previewed
exactly as they will be sent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ChainError, NotFoundError, RagLabError
from .llm import GenerationParams, LlmGateway
from .retrieval import RetrievalHit, Retriever
from .templates import (
    ExecutionContext,
    TemplateAst,
    TemplateSpec,
    parse_template,
    referenced_indices,
    render_template,
)

OPERATORS = ("LLM", "Retriever", "Identity")
DEFAULT_TOP_K = 5
# context-budget allowance for the prompt text surrounding the document block
DOC_BLOCK_OVERHEAD_TOKENS = 256


@dataclass
class ActionSpec:
    operator: str
    template: TemplateSpec
    retriever_ref: str = ""
    top_k: int = DEFAULT_TOP_K
    gen_params: GenerationParams | None = None

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise ChainError(f"unknown operator {self.operator!r}")
        if self.operator == "Retriever":
            if not self.retriever_ref:
                raise ChainError("Retriever action requires retriever_ref")
            if self.top_k < 1:
                raise ChainError("top_k must be >= 1")
            if self.gen_params is not None:
                raise ChainError("gen_params is only valid on LLM actions")
        else:
            if self.retriever_ref:
                raise ChainError(
                    f"retriever_ref is only valid on Retriever actions "
                    f"(found on {self.operator})")

    def parsed(self) -> TemplateAst:
        return parse_template(self.template)

    def to_dict(self) -> dict:
        d: dict = {"operator": self.operator, "template": self.template.to_dict()}
        if self.operator == "Retriever":
            d["retriever_ref"] = self.retriever_ref
            d["top_k"] = self.top_k
        if self.operator == "LLM" and self.gen_params is not None:
            d["gen_params"] = self.gen_params.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ActionSpec":
        gen = d.get("gen_params")
        return cls(operator=d["operator"],
                   template=TemplateSpec.from_dict(d["template"]),
                   retriever_ref=d.get("retriever_ref", ""),
                   top_k=d.get("top_k", DEFAULT_TOP_K),
                   gen_params=GenerationParams.from_dict(gen) if gen else None)


@dataclass
class ChainSpec:
    chain_id: str
    name: str = ""
    dataset_tag: str = ""
    actions: list[ActionSpec] = field(default_factory=list)

    def validate(self) -> None:
        """Parse every template and reject forward context references."""
        if not self.actions:
            raise ChainError(f"chain {self.chain_id!r} has no actions")
        for k, action in enumerate(self.actions):
            ast = action.parsed()  # raises TemplateParseError with span
            refs = referenced_indices(ast)
            for name, indices in refs.items():
                for idx in indices:
                    if idx < 0 or idx >= k:
                        raise ChainError(
                            f"action {k} references {name}[{idx}], which is not "
                            f"produced by an earlier action")

    def to_dict(self) -> dict:
        return {"chain_id": self.chain_id, "name": self.name,
                "dataset_tag": self.dataset_tag,
                "actions": [a.to_dict() for a in self.actions]}

    @classmethod
    def from_dict(cls, d: dict) -> "ChainSpec":
        return cls(chain_id=d["chain_id"], name=d.get("name", ""),
                   dataset_tag=d.get("dataset_tag", ""),
                   actions=[ActionSpec.from_dict(a) for a in d.get("actions", [])])


@dataclass
class StepTrace:
    action_index: int
    operator: str
    rendered_prompt: str
    output: str
    hits: list[RetrievalHit] = field(default_factory=list)
    latency_s: float = 0.0

    def to_dict(self) -> dict:
        return {"action_index": self.action_index, "operator": self.operator,
                "rendered_prompt": self.rendered_prompt, "output": self.output,
                "hits": [h._asdict() for h in self.hits],
                "latency_s": self.latency_s}


@dataclass
class ChainRuntime:
    """Backends an executing chain draws on."""

    llm: LlmGateway | None = None
    retrievers: Mapping[str, Retriever] = field(default_factory=dict)

    def retriever(self, ref: str) -> Retriever:
        try:
            return self.retrievers[ref]
        except KeyError:
            raise NotFoundError(f"unknown retriever {ref!r}") from None


class ChainExecutionError(RagLabError):
    """A step failed; carries the traces completed before the failure."""

    code = "chain_execution_error"

    def __init__(self, action_index: int, cause: Exception,
                 traces: list[StepTrace]):
        super().__init__(f"action {action_index} failed: {cause}")
        self.action_index = action_index
        self.cause = cause
        self.traces = traces


def render_action(chain: ChainSpec, k: int, ctx: ExecutionContext) -> str:
    """Render action k's prompt only; performs no retrieval or generation."""
    if not 0 <= k < len(chain.actions):
        raise NotFoundError(f"chain {chain.chain_id!r} has no action {k}")
    ast = chain.actions[k].parsed()
    return render_template(ast, ctx)


def execute_action(chain: ChainSpec, k: int, ctx: ExecutionContext,
                   runtime: ChainRuntime) -> tuple[StepTrace, ExecutionContext]:
    """Run action k and append its outputs to a new context."""
    action = chain.actions[k]
    start = time.perf_counter()
    rendered = render_action(chain, k, ctx)
    hits: list[RetrievalHit] = []
    if action.operator == "Retriever":
        retriever = runtime.retriever(action.retriever_ref)
        hits = retriever.search(rendered, action.top_k)
        output = render_document_block(hits, retriever,
                                       token_budget=_doc_budget(chain, runtime))
        listing = format_hit_list(hits)
    elif action.operator == "LLM":
        if runtime.llm is None:
            raise ChainError("chain has an LLM action but no llm backend configured")
        result = runtime.llm.generate(rendered, action.gen_params or GenerationParams())
        output = result.text
        listing = ""
    else:  # Identity: the rendered prompt is the output
        output = rendered
        listing = ""
    latency = time.perf_counter() - start
    trace = StepTrace(action_index=k, operator=action.operator,
                      rendered_prompt=rendered, output=output, hits=hits,
                      latency_s=latency)
    new_ctx = ExecutionContext(question=ctx.question,
                               response=ctx.response + [output],
                               wiki_id_title=ctx.wiki_id_title + [listing])
    return trace, new_ctx


def execute_chain(chain: ChainSpec, question: str,
                  runtime: ChainRuntime) -> list[StepTrace]:
    """Run every action in order; the last action's output is the answer."""
    ctx = ExecutionContext(question=question)
    traces: list[StepTrace] = []
    for k in range(len(chain.actions)):
        try:
            trace, ctx = execute_action(chain, k, ctx, runtime)
        except Exception as e:
            raise ChainExecutionError(k, e, traces) from e
        traces.append(trace)
    return traces


def chain_answer(traces: list[StepTrace]) -> str:
    return traces[-1].output if traces else ""


def format_hit_list(hits: list[RetrievalHit]) -> str:
    """"{title}, {wiki_id}" entries joined by "; "; the templates split on
    exactly these separators, so the top-1 title is entry[0] before ", "."""
    return "; ".join(f"{h.title}, {h.wiki_id}" for h in hits)


def render_document_block(hits: list[RetrievalHit], retriever: Retriever,
                          token_budget: int | None = None) -> str:
    """"{title}\\n{text}" blocks joined by blank lines, in hit order.

    Truncation happens at whole-passage granularity: drop trailing passages
    until the estimate fits the budget, but always keep the first hit.
    """
    blocks = []
    for h in hits:
        passage = retriever.passage(h.passage_id)
        blocks.append(f"{passage.title}\n{passage.text}")
    if token_budget is not None:
        kept: list[str] = []
        used = 0
        for i, block in enumerate(blocks):
            cost = _estimate_tokens(block) + (1 if i else 0)
            if i > 0 and used + cost > token_budget:
                break
            kept.append(block)
            used += cost
        blocks = kept
    return "\n\n".join(blocks)


def _doc_budget(chain: ChainSpec, runtime: ChainRuntime) -> int | None:
    if runtime.llm is None:
        return None
    max_new = max(
        ((a.gen_params or GenerationParams()).max_new_tokens
         for a in chain.actions if a.operator == "LLM"),
        default=GenerationParams().max_new_tokens)
    budget = (runtime.llm.config.max_context_tokens - max_new
              - DOC_BLOCK_OVERHEAD_TOKENS)
    return max(budget, 1)


def _estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4)
