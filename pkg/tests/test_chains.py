import json

import pytest

from raglab.bm25 import bm25_search, build_bm25
from raglab.chains import (
    ActionSpec,
    ChainExecutionError,
    ChainRuntime,
    ChainSpec,
    chain_answer,
    execute_action,
    execute_chain,
    format_hit_list,
    render_action,
    render_document_block,
)
from raglab.corpus import ingest_passages
from raglab.errors import ChainError, TemplateRenderError
from raglab.llm import GenerationParams, LlmBackendConfig, LlmGateway
from raglab.retrieval import RetrievalHit
from raglab.retrievers import SparseRetriever
from raglab.templates import ExecutionContext, TemplateSpec


def lit(source):
    return TemplateSpec(mode="literal", source=source)


def expr(source):
    return TemplateSpec(mode="expression", source=source)


@pytest.fixture
def corpus(tmp_path):
    rows = [
        {"wiki_id": "11", "title": "Paris", "text": "Paris is the capital of France."},
        {"wiki_id": "22", "title": "London", "text": "London is the capital of England."},
        {"wiki_id": "33", "title": "Cat", "text": "cats purr loudly"},
    ]
    path = tmp_path / "c.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return ingest_passages(path, "toy")


@pytest.fixture
def retriever(corpus):
    return SparseRetriever(build_bm25(corpus), corpus)


def make_llm(rules):
    return LlmGateway(LlmBackendConfig(kind="mock", mock_rules=rules))


@pytest.fixture
def runtime(retriever):
    llm = make_llm([("capital of France", "Paris"), ("purr", "cats")])
    return ChainRuntime(llm=llm, retrievers={"toy.bm25": retriever})


class TestSpecs:
    def test_retriever_requires_ref(self):
        with pytest.raises(ChainError, match="retriever_ref"):
            ActionSpec(operator="Retriever", template=lit("{question}"))

    def test_gen_params_only_on_llm(self):
        with pytest.raises(ChainError):
            ActionSpec(operator="Retriever", template=lit("{question}"),
                       retriever_ref="r", gen_params=GenerationParams())

    def test_ref_only_on_retriever(self):
        with pytest.raises(ChainError):
            ActionSpec(operator="Identity", template=lit("x"), retriever_ref="r")

    def test_unknown_operator(self):
        with pytest.raises(ChainError):
            ActionSpec(operator="Gather", template=lit("x"))

    def test_forward_reference_rejected(self):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="LLM", template=lit("{response[0]}")),
        ])
        with pytest.raises(ChainError, match="response\\[0\\]"):
            chain.validate()

    def test_backward_reference_ok(self):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="Identity", template=lit("{question}")),
            ActionSpec(operator="LLM", template=lit("{response[0]}")),
        ])
        chain.validate()

    def test_empty_chain_rejected(self):
        with pytest.raises(ChainError, match="no actions"):
            ChainSpec(chain_id="c").validate()

    def test_round_trips_through_dict(self):
        chain = ChainSpec(chain_id="c", name="n", dataset_tag="nq", actions=[
            ActionSpec(operator="Retriever", template=lit("{question}"),
                       retriever_ref="r", top_k=3),
            ActionSpec(operator="LLM", template=lit("{response[0]}"),
                       gen_params=GenerationParams(max_new_tokens=16)),
            ActionSpec(operator="Identity", template=expr("wiki_id_title[0]")),
        ])
        loaded = ChainSpec.from_dict(json.loads(json.dumps(chain.to_dict())))
        assert loaded == chain


class TestRenderAction:
    def test_passthrough(self):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="Identity", template=lit("{question}"))])
        assert render_action(chain, 0, ExecutionContext(question="q1")) == "q1"

    def test_unbound_index_errors(self):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="Identity", template=lit("{question}")),
            ActionSpec(operator="LLM", template=lit("{response[0]}"))])
        with pytest.raises(TemplateRenderError):
            render_action(chain, 1, ExecutionContext(question="q"))

    def test_no_backend_calls(self, runtime):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="LLM", template=lit("{question}"))])
        before = runtime.llm.call_count
        render_action(chain, 0, ExecutionContext(question="q"))
        assert runtime.llm.call_count == before


class TestExecuteAction:
    def test_identity_no_backend(self, runtime):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="Identity", template=lit("Paris"))])
        before = runtime.llm.call_count
        trace, ctx = execute_action(chain, 0, ExecutionContext(question="q"), runtime)
        assert trace.output == "Paris"
        assert runtime.llm.call_count == before
        assert ctx.response == ["Paris"]
        assert ctx.wiki_id_title == [""]

    def test_retriever_matches_bm25(self, runtime, retriever, corpus):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="Retriever", template=lit("{question}"),
                       retriever_ref="toy.bm25", top_k=2)])
        trace, ctx = execute_action(chain, 0, ExecutionContext(question="cats purr"),
                                    runtime)
        assert trace.hits == bm25_search(retriever.index, "cats purr", 2)
        assert trace.latency_s > 0
        assert ctx.wiki_id_title[0].startswith("Cat, 33")
        assert "cats purr loudly" in ctx.response[0]

    def test_llm_delegates_to_mock(self, runtime):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="LLM", template=lit("the capital of France?"))])
        trace, _ = execute_action(chain, 0, ExecutionContext(question="x"), runtime)
        assert trace.output == "Paris"

    def test_render_equals_executed_prompt(self, runtime):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="Retriever", template=lit("{question}"),
                       retriever_ref="toy.bm25")])
        ctx = ExecutionContext(question="cats purr")
        rendered = render_action(chain, 0, ctx)
        trace, _ = execute_action(chain, 0, ctx, runtime)
        assert trace.rendered_prompt == rendered


class TestExecuteChain:
    def test_single_llm_closed_book(self, runtime):
        chain = ChainSpec(chain_id="closed", actions=[
            ActionSpec(operator="LLM",
                       template=lit("Answer the capital of France question"))])
        traces = execute_chain(chain, "ignored", runtime)
        assert chain_answer(traces) == "Paris"

    def test_two_action_open_book(self, runtime):
        chain = ChainSpec(chain_id="open", actions=[
            ActionSpec(operator="Retriever", template=lit("{question}"),
                       retriever_ref="toy.bm25"),
            ActionSpec(operator="LLM",
                       template=lit("{response[0]}\n\nanswer about purr\n\nAnswer: "))])
        traces = execute_chain(chain, "cats purr", runtime)
        assert len(traces) == 2
        assert chain_answer(traces) == "cats"

    def test_three_action_rewrite_chain(self, runtime):
        chain = ChainSpec(chain_id="rewrite", actions=[
            ActionSpec(operator="Retriever", template=lit("{question}"),
                       retriever_ref="toy.bm25"),
            ActionSpec(operator="LLM", template=lit("rewrite: {question}")),
            ActionSpec(operator="LLM",
                       template=lit("{response[0]}\n\nq: {response[1]}\n\nA: "))])
        traces = execute_chain(chain, "the capital of France", runtime)
        assert [t.action_index for t in traces] == [0, 1, 2]
        assert len(traces) == 3

    def test_context_lengths_track_actions(self, runtime):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="Identity", template=lit("a")),
            ActionSpec(operator="Identity", template=lit("b")),
        ])
        ctx = ExecutionContext(question="q")
        for k in range(2):
            _, ctx = execute_action(chain, k, ctx, runtime)
            assert len(ctx.response) == len(ctx.wiki_id_title) == k + 1

    def test_deterministic_end_to_end(self, runtime):
        chain = ChainSpec(chain_id="open", actions=[
            ActionSpec(operator="Retriever", template=lit("{question}"),
                       retriever_ref="toy.bm25"),
            ActionSpec(operator="LLM", template=lit("{response[0]}\n\nAnswer: "))])
        a = execute_chain(chain, "capital of France", runtime)
        b = execute_chain(chain, "capital of France", runtime)
        assert [t.output for t in a] == [t.output for t in b]
        assert [t.rendered_prompt for t in a] == [t.rendered_prompt for t in b]

    def test_failing_step_carries_partial_traces(self, retriever):
        llm = LlmGateway(LlmBackendConfig(
            kind="mock", mock_fallback={"mode": "error", "text": "down"}))
        runtime = ChainRuntime(llm=llm, retrievers={"toy.bm25": retriever})
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="Retriever", template=lit("{question}"),
                       retriever_ref="toy.bm25"),
            ActionSpec(operator="LLM", template=lit("{response[0]}"))])
        with pytest.raises(ChainExecutionError) as err:
            execute_chain(chain, "cats purr", runtime)
        assert err.value.action_index == 1
        assert len(err.value.traces) == 1

    def test_unknown_retriever(self, runtime):
        chain = ChainSpec(chain_id="c", actions=[
            ActionSpec(operator="Retriever", template=lit("{question}"),
                       retriever_ref="nope")])
        with pytest.raises(ChainExecutionError):
            execute_chain(chain, "q", runtime)


class TestFormatting:
    def test_hit_list_format(self):
        hits = [RetrievalHit(0, 1.0, "11", "Paris"), RetrievalHit(1, 0.5, "22", "London")]
        assert format_hit_list(hits) == "Paris, 11; London, 22"

    def test_top1_title_extraction(self):
        listing = format_hit_list([RetrievalHit(0, 1.0, "11", "Paris"),
                                   RetrievalHit(1, 0.5, "22", "London")])
        assert listing.split("; ")[0].split(", ")[0] == "Paris"

    def test_empty_hits(self):
        assert format_hit_list([]) == ""

    def test_document_block(self, retriever):
        hits = retriever.search("cats purr", 1)
        block = render_document_block(hits, retriever)
        assert block == "Cat\ncats purr loudly"

    def test_document_block_joins_with_blank_line(self, retriever):
        hits = [RetrievalHit(0, 1.0, "11", "Paris"), RetrievalHit(1, 0.5, "22", "London")]
        block = render_document_block(hits, retriever)
        assert block == ("Paris\nParis is the capital of France.\n\n"
                         "London\nLondon is the capital of England.")

    def test_document_block_budget_keeps_first(self, retriever):
        hits = [RetrievalHit(0, 1.0, "11", "Paris"), RetrievalHit(1, 0.5, "22", "London")]
        block = render_document_block(hits, retriever, token_budget=1)
        assert block == "Paris\nParis is the capital of France."

    def test_document_block_empty(self, retriever):
        assert render_document_block([], retriever) == ""
