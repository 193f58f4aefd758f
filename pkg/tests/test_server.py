import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from raglab.engine import Engine, EngineConfig
from raglab.server.app import create_app

from conftest import (
    open_book_chain_doc,
    planted_corpus_file,
    planted_dataset_file,
    planted_llm_config,
)

API = "/api/v1"


@pytest.fixture
def client(workspace):
    return TestClient(create_app(workspace["engine"]))


def ctx_body(question, response=None, wiki=None):
    return {"context": {"question": question, "response": response or [],
                        "wiki_id_title": wiki or []}}


class TestResources:
    def test_corpora(self, client, tmp_path):
        listed = client.get(f"{API}/corpora").json()["corpora"]
        assert listed[0]["corpus_id"] == "planted"
        resp = client.post(f"{API}/corpora",
                           json={"corpus_id": "missing", "path": "/nope.jsonl"})
        assert resp.status_code == 400

    def test_corpus_create(self, client, tmp_path):
        src = planted_corpus_file(tmp_path)
        resp = client.post(f"{API}/corpora",
                           json={"corpus_id": "second", "path": str(src)})
        assert resp.status_code == 201
        assert resp.json()["size"] == 5

    def test_indices(self, client):
        listed = client.get(f"{API}/indices").json()["indices"]
        assert {e["index_id"] for e in listed} == {"planted.bm25", "planted.flat"}
        resp = client.post(f"{API}/indices",
                           json={"corpus_id": "planted", "kind": "bm25",
                                 "index_id": "planted.bm25b"})
        assert resp.status_code == 201
        assert resp.json()["index_id"] == "planted.bm25b"

    def test_chain_crud(self, client):
        doc = open_book_chain_doc(chain_id="crud")
        assert client.post(f"{API}/chains", json=doc).status_code == 201
        got = client.get(f"{API}/chains/crud").json()
        assert got["chain_id"] == "crud"
        doc["name"] = "renamed"
        assert client.put(f"{API}/chains/crud", json=doc).status_code == 200
        assert client.get(f"{API}/chains/crud").json()["name"] == "renamed"
        assert client.get(f"{API}/chains/ghost").status_code == 404

    def test_invalid_chain_rejected_with_422(self, client):
        doc = open_book_chain_doc(chain_id="bad")
        doc["actions"][1]["template"]["source"] = "{response[5]}"
        resp = client.post(f"{API}/chains", json=doc)
        assert resp.status_code == 422
        assert resp.json()["code"] == "chain_error"

    def test_template_syntax_error_carries_span(self, client):
        doc = open_book_chain_doc(chain_id="syntax")
        doc["actions"][0]["template"] = {"mode": "expression", "source": "question ++ x"}
        resp = client.post(f"{API}/chains", json=doc)
        assert resp.status_code == 422
        assert "span" in resp.json()

    def test_datasets(self, client, tmp_path):
        listed = client.get(f"{API}/datasets").json()["datasets"]
        assert listed[0]["tag"] == "planted"
        page = client.get(f"{API}/datasets/planted/instances",
                          params={"limit": 2, "offset": 1}).json()
        assert page["total"] == 5
        assert len(page["instances"]) == 2
        assert page["instances"][0]["instance_id"] == "q1"


class TestExecution:
    def test_render_matches_execute_byte_exact(self, client):
        body = ctx_body("what is found in the zephyr quokka violet")
        rendered = client.post(f"{API}/chains/open/actions/0/render", json=body)
        assert rendered.status_code == 200
        executed = client.post(f"{API}/chains/open/actions/0/execute", json=body)
        assert executed.status_code == 200
        assert executed.json()["trace"]["rendered_prompt"] == \
            rendered.json()["rendered_prompt"]

    def test_render_is_side_effect_free(self, client, workspace):
        before = workspace["engine"].llm.call_count
        client.post(f"{API}/chains/open/actions/1/render",
                    json=ctx_body("q", response=["doc"], wiki=[""]))
        assert workspace["engine"].llm.call_count == before

    def test_identity_action_zero_backend_calls(self, client, workspace):
        doc = {
            "chain_id": "ident", "actions": [
                {"operator": "Identity",
                 "template": {"mode": "literal", "source": "{question}"}}]}
        client.post(f"{API}/chains", json=doc)
        before = workspace["engine"].llm.call_count
        resp = client.post(f"{API}/chains/ident/actions/0/execute",
                           json=ctx_body("pass through"))
        assert resp.json()["trace"]["output"] == "pass through"
        assert workspace["engine"].llm.call_count == before

    def test_execute_chain_full(self, client):
        resp = client.post(f"{API}/chains/open/execute",
                           json={"question": "what is found in the zephyr quokka violet"})
        body = resp.json()
        assert len(body["traces"]) == 2
        assert body["answer"] == "quokka"
        assert body["traces"][0]["hits"][0]["wiki_id"] == "101"
        assert body["traces"][0]["hits"][0]["text"]

    def test_execute_with_highlighting(self, client):
        resp = client.post(f"{API}/chains/open/execute", json={
            "question": "what is found in the zephyr quokka violet",
            "instance": {"golds": ["quokka"], "provenance_ids": ["101"]}})
        body = resp.json()
        answer_trace = body["traces"][1]
        assert any(s["kind"] == "gold_answer" for s in answer_trace["highlight_spans"])
        top_hit = body["traces"][0]["hits"][0]
        assert top_hit["provenance_hit"] is True
        assert any(s["kind"] == "gold_answer" for s in top_hit["text_spans"])

    def test_context_error_is_422_with_span(self, client):
        resp = client.post(f"{API}/chains/open/actions/1/render",
                           json=ctx_body("q"))
        assert resp.status_code == 422
        assert resp.json()["code"] == "template_render_error"
        assert resp.json().get("span")

    def test_unknown_chain_404(self, client):
        assert client.post(f"{API}/chains/ghost/execute",
                           json={"question": "q"}).status_code == 404

    def test_highlight_endpoint(self, client):
        resp = client.post(f"{API}/highlight", json={
            "text": "It is Paris.", "golds": ["paris"], "provenance_ids": []})
        assert resp.json()["spans"] == [{"start": 6, "end": 11, "kind": "gold_answer"}]

    def test_concurrent_chains_are_isolated(self, tmp_path):
        # slow mock backend: overlapping executions must not mix contexts
        config = EngineConfig(
            root=str(tmp_path / "iso"),
            llm=planted_llm_config(mock_delay_s=0.15),
            eval_concurrency=2)
        engine = Engine(config)
        engine.ingest(planted_corpus_file(tmp_path), "planted")
        engine.build_index("planted", "bm25")
        from raglab.chains import ChainSpec
        engine.save_chain(ChainSpec.from_dict(open_book_chain_doc()))
        client = TestClient(create_app(engine))
        questions = ["what is found in the zephyr quokka violet",
                     "what is found in the borealis saffron indigo"]
        expected = {questions[0]: "quokka", questions[1]: "saffron"}
        results = {}

        def run(q):
            resp = client.post(f"{API}/chains/open/execute", json={"question": q})
            results[q] = resp.json()

        threads = [threading.Thread(target=run, args=(q,)) for q in questions]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for q in questions:
            assert results[q]["answer"] == expected[q]
            assert q in results[q]["traces"][1]["rendered_prompt"]


class TestEvalJobs:
    def test_job_lifecycle(self, client):
        resp = client.post(f"{API}/evals", json={
            "chain_id": "open", "dataset": "planted",
            "metrics": ["em", "rprec"], "limit": 5})
        assert resp.status_code == 202
        job_id = resp.json()["job_id"]
        last_completed = 0
        for _ in range(200):
            job = client.get(f"{API}/evals/{job_id}").json()
            assert job["completed"] >= last_completed  # progress never decreases
            last_completed = job["completed"]
            if job["state"] in ("done", "failed"):
                break
            time.sleep(0.02)
        assert job["state"] == "done"
        assert job["run_id"]
        run = client.get(f"{API}/runs/{job['run_id']}").json()
        assert run["metrics"]["em"] == 1.0
        instances = client.get(f"{API}/runs/{job['run_id']}/instances").json()
        assert len(instances["instances"]) == 5

    def test_duplicate_job_409(self, tmp_path):
        config = EngineConfig(root=str(tmp_path / "dup"),
                              llm=planted_llm_config(mock_delay_s=0.2))
        engine = Engine(config)
        engine.ingest(planted_corpus_file(tmp_path), "planted")
        engine.build_index("planted", "bm25")
        engine.register_dataset("planted", planted_dataset_file(tmp_path))
        from raglab.chains import ChainSpec
        engine.save_chain(ChainSpec.from_dict(open_book_chain_doc()))
        client = TestClient(create_app(engine))
        body = {"chain_id": "open", "dataset": "planted", "metrics": ["em"]}
        first = client.post(f"{API}/evals", json=body)
        assert first.status_code == 202
        second = client.post(f"{API}/evals", json=body)
        assert second.status_code == 409
        # wait for the first to settle so the engine tmpdir stays valid
        job_id = first.json()["job_id"]
        for _ in range(300):
            if client.get(f"{API}/evals/{job_id}").json()["state"] in ("done", "failed"):
                break
            time.sleep(0.02)

    def test_poll_unknown_job(self, client):
        assert client.get(f"{API}/evals/nope").status_code == 404

    def test_eval_unknown_chain(self, client):
        resp = client.post(f"{API}/evals", json={
            "chain_id": "ghost", "dataset": "planted", "metrics": ["em"]})
        assert resp.status_code == 404


class TestRunsApi:
    def test_list_get_compare(self, client, workspace):
        engine = workspace["engine"]
        r1 = engine.run_eval("open", "planted", ["em"]).run_id
        r2 = engine.run_eval("open", "planted", ["em", "f1"]).run_id
        runs = client.get(f"{API}/runs").json()["runs"]
        assert [r["run_id"] for r in runs][:2] == [r2, r1]
        table = client.get(f"{API}/runs/compare", params={"ids": f"{r1},{r2}"}).json()
        names = [row["name"] for row in table["metrics"]]
        assert "em" in names and "f1" in names
        assert client.get(f"{API}/runs/ghost").status_code == 404


class TestChat:
    def test_two_turn_conversation(self, client):
        session = client.post(f"{API}/chat/sessions", json={"chain_id": "open"}).json()
        sid = session["session_id"]
        first = client.post(f"{API}/chat/sessions/{sid}/messages",
                            json={"text": "what is found in the zephyr quokka violet"})
        assert first.status_code == 200
        body = first.json()
        assert body["reply"] == "quokka"
        assert len(body["turns"]) == 2
        assert body["turns"][0]["role"] == "user"
        second = client.post(f"{API}/chat/sessions/{sid}/messages",
                             json={"text": "and in the borealis saffron indigo"})
        turns = second.json()["turns"]
        assert len(turns) == 4
        # the chain's question is the rendered dialogue: both turns visible
        question_sent = second.json()["traces"][0]["rendered_prompt"]
        assert "User: what is found in the zephyr quokka violet" in question_sent
        assert "Assistant: quokka" in question_sent
        assert question_sent.endswith("User: and in the borealis saffron indigo")

    def test_unknown_session_404(self, client):
        assert client.post(f"{API}/chat/sessions/ghost/messages",
                           json={"text": "hi"}).status_code == 404

    def test_unknown_chain_404(self, client):
        assert client.post(f"{API}/chat/sessions",
                           json={"chain_id": "ghost"}).status_code == 404


class TestAuth:
    def test_bearer_token_enforced(self, tmp_path):
        config = EngineConfig(root=str(tmp_path / "auth"), server_token="sekret")
        client = TestClient(create_app(Engine(config)))
        denied = client.get(f"{API}/corpora")
        assert denied.status_code == 404
        allowed = client.get(f"{API}/corpora",
                             headers={"Authorization": "Bearer sekret"})
        assert allowed.status_code == 200
