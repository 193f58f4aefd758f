"""HTTP service over the engine: the contract the web UI and scripts consume.

All endpoints live under ``/api/v1``. Render endpoints are side-effect
free; execute endpoints return the exact prompt sent to the backend in
every step trace. Evaluation jobs run on a background worker pool and are
polled by id. Errors use one body shape: ``{code, message, span?}``.
"""

from __future__ import annotations

import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse

from ..chains import (
    ChainExecutionError,
    ChainSpec,
    chain_answer,
    execute_action,
    execute_chain,
    format_hit_list,
    render_action,
)
from ..engine import Engine
from ..errors import (
    BackendError,
    ChainError,
    DuplicateJobError,
    ImmutableRunError,
    IngestError,
    NotFoundError,
    RagLabError,
    TemplateError,
)
from ..evals import highlight_spans, load_dataset
from ..templates import ExecutionContext
from . import schemas as S

API = "/api/v1"

_STATUS_BY_TYPE = (
    (NotFoundError, 404),
    (DuplicateJobError, 409),
    (ImmutableRunError, 409),
    (TemplateError, 422),
    (ChainError, 422),
    (IngestError, 400),
    (BackendError, 502),
)


@dataclass
class EvalJob:
    job_id: str
    chain_id: str
    dataset: str
    state: str = "queued"            # queued | running | done | failed
    completed: int = 0
    total: int = 0
    run_id: str = ""
    error: str = ""

    def out(self) -> S.JobOut:
        return S.JobOut(**self.__dict__)


class JobManager:
    """Background eval jobs; one active job per (chain, dataset) pair."""

    def __init__(self, engine: Engine, workers: int = 2):
        self.engine = engine
        self.pool = ThreadPoolExecutor(max_workers=workers)
        self.jobs: dict[str, EvalJob] = {}
        self.lock = threading.Lock()

    def create(self, req: S.EvalCreate) -> EvalJob:
        with self.lock:
            for job in self.jobs.values():
                if (job.chain_id == req.chain_id and job.dataset == req.dataset
                        and job.state in ("queued", "running")):
                    raise DuplicateJobError(
                        f"an eval job for chain {req.chain_id!r} on dataset "
                        f"{req.dataset!r} is already {job.state}")
            job = EvalJob(job_id=uuid.uuid4().hex[:12], chain_id=req.chain_id,
                          dataset=req.dataset)
            self.jobs[job.job_id] = job
        self.pool.submit(self._run, job, req)
        return job

    def _run(self, job: EvalJob, req: S.EvalCreate) -> None:
        job.state = "running"

        def on_progress(done: int, total: int):
            # progress is monotone: published value never decreases
            job.total = total
            if done > job.completed:
                job.completed = done

        try:
            report = self.engine.run_eval(
                req.chain_id, req.dataset, req.metrics, limit=req.limit,
                concurrency=req.concurrency, on_progress=on_progress)
            job.run_id = report.run_id
            job.state = "done"
        except Exception as e:  # job failures land in the poll body
            job.error = str(e)
            job.state = "failed"

    def get(self, job_id: str) -> EvalJob:
        job = self.jobs.get(job_id)
        if job is None:
            raise NotFoundError(f"unknown eval job {job_id!r}")
        return job

    def list(self) -> list[EvalJob]:
        with self.lock:
            return sorted(self.jobs.values(), key=lambda j: j.job_id)


@dataclass
class ChatSession:
    session_id: str
    chain_id: str
    turns: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def history_text(self) -> str:
        roles = {"user": "User", "assistant": "Assistant"}
        return "\n".join(f"{roles[t['role']]}: {t['text']}" for t in self.turns)


class ChatStore:
    def __init__(self):
        self.sessions: dict[str, ChatSession] = {}
        self.lock = threading.Lock()

    def create(self, chain_id: str) -> ChatSession:
        session = ChatSession(session_id=uuid.uuid4().hex[:12], chain_id=chain_id)
        with self.lock:
            self.sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> ChatSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown chat session {session_id!r}")
        return session


def create_app(engine: Engine, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="raglab", version="0.1.0")
    jobs = JobManager(engine)
    chats = ChatStore()
    ui_dir = ui_dir if ui_dir is not None else os.environ.get("RAGLAB_UI_DIR", "")

    def require_token(authorization: str = Header(default="")):
        token = engine.config.server_token
        if token and authorization != f"Bearer {token}":
            raise NotFoundError("missing or invalid bearer token")

    dep = [Depends(require_token)]

    @app.exception_handler(RagLabError)
    async def raglab_error_handler(request: Request, exc: RagLabError):
        status = 400
        inner = exc.cause if isinstance(exc, ChainExecutionError) else exc
        for etype, code in _STATUS_BY_TYPE:
            if isinstance(inner, etype):
                status = code
                break
        else:
            if isinstance(exc, ChainExecutionError):
                status = 502
        body = {"code": getattr(inner, "code", "error"), "message": str(exc)}
        span = getattr(inner, "span", None)
        if span is not None:
            body["span"] = list(span)
        return JSONResponse(status_code=status, content=body)

    # -- corpora / indices ----------------------------------------------

    @app.post(f"{API}/corpora", dependencies=dep, status_code=201)
    def create_corpus(body: S.CorpusCreate):
        return engine.ingest(body.path, body.corpus_id)

    @app.get(f"{API}/corpora", dependencies=dep)
    def list_corpora():
        return {"corpora": engine.list_corpora()}

    @app.post(f"{API}/indices", dependencies=dep, status_code=201)
    def create_index(body: S.IndexCreate):
        return engine.build_index(body.corpus_id, body.kind, body.params,
                                  index_id=body.index_id)

    @app.get(f"{API}/indices", dependencies=dep)
    def list_indices():
        return {"indices": engine.list_indices()}

    # -- chains -----------------------------------------------------------

    @app.post(f"{API}/chains", dependencies=dep, status_code=201)
    def create_chain(body: S.ChainDoc):
        return engine.save_chain(ChainSpec.from_dict(body.model_dump()))

    @app.get(f"{API}/chains", dependencies=dep)
    def list_chains():
        return {"chains": engine.list_chains()}

    @app.get(f"{API}/chains/{{chain_id}}", dependencies=dep)
    def get_chain(chain_id: str):
        return engine.get_chain(chain_id).to_dict()

    @app.put(f"{API}/chains/{{chain_id}}", dependencies=dep)
    def put_chain(chain_id: str, body: S.ChainDoc):
        doc = body.model_dump()
        doc["chain_id"] = chain_id
        return engine.save_chain(ChainSpec.from_dict(doc))

    # -- rendering / execution ---------------------------------------------

    def _ctx(body: S.ContextBody) -> ExecutionContext:
        return ExecutionContext(question=body.question,
                                response=list(body.response),
                                wiki_id_title=list(body.wiki_id_title))

    def _trace_out(chain: ChainSpec, trace, runtime,
                   instance: S.InstanceHighlight | None) -> S.TraceOut:
        golds = instance.golds if instance else []
        prov = set(instance.provenance_ids) if instance else set()
        retriever = None
        if trace.operator == "Retriever":
            ref = chain.actions[trace.action_index].retriever_ref
            retriever = runtime.retrievers.get(ref)
        hits = []
        for h in trace.hits:
            text = retriever.passage(h.passage_id).text if retriever else ""
            text_spans = ([S.SpanOut(**s) for s in highlight_spans(text, golds)]
                          if golds and text else [])
            hits.append(S.HitOut(passage_id=h.passage_id, score=h.score,
                                 wiki_id=h.wiki_id, title=h.title, text=text,
                                 provenance_hit=h.wiki_id in prov,
                                 text_spans=text_spans))
        spans = [S.SpanOut(**s) for s in
                 highlight_spans(trace.output, golds, sorted(prov))] \
            if (golds or prov) else []
        return S.TraceOut(action_index=trace.action_index, operator=trace.operator,
                          rendered_prompt=trace.rendered_prompt, output=trace.output,
                          hits=hits, latency_s=trace.latency_s,
                          highlight_spans=spans)

    @app.post(f"{API}/chains/{{chain_id}}/actions/{{k}}/render",
              dependencies=dep, response_model=S.RenderOut)
    def render(chain_id: str, k: int, body: S.RenderRequest):
        chain = engine.get_chain(chain_id)
        rendered = render_action(chain, k, _ctx(body.context))
        return S.RenderOut(chain_id=chain_id, action_index=k,
                           rendered_prompt=rendered)

    @app.post(f"{API}/chains/{{chain_id}}/actions/{{k}}/execute",
              dependencies=dep, response_model=S.ExecuteActionOut)
    def execute_one(chain_id: str, k: int, body: S.ExecuteActionRequest):
        chain = engine.get_chain(chain_id)
        runtime = engine.runtime(chain)
        trace, ctx = execute_action(chain, k, _ctx(body.context), runtime)
        return S.ExecuteActionOut(
            trace=_trace_out(chain, trace, runtime, body.instance),
            context=S.ContextBody(question=ctx.question, response=ctx.response,
                                  wiki_id_title=ctx.wiki_id_title))

    @app.post(f"{API}/chains/{{chain_id}}/execute",
              dependencies=dep, response_model=S.ExecuteChainOut)
    def execute_whole(chain_id: str, body: S.ExecuteChainRequest):
        chain = engine.get_chain(chain_id)
        runtime = engine.runtime(chain)
        traces = execute_chain(chain, body.question, runtime)
        final_ctx = S.ContextBody(
            question=body.question,
            response=[t.output for t in traces],
            wiki_id_title=[format_hit_list(t.hits) if t.operator == "Retriever"
                           else "" for t in traces])
        return S.ExecuteChainOut(
            chain_id=chain_id, question=body.question,
            answer=chain_answer(traces),
            traces=[_trace_out(chain, t, runtime, body.instance) for t in traces],
            context=final_ctx)

    @app.post(f"{API}/highlight", dependencies=dep)
    def highlight(body: S.HighlightRequest):
        return {"spans": highlight_spans(body.text, body.golds, body.provenance_ids)}

    # -- evaluation jobs -----------------------------------------------------

    @app.post(f"{API}/evals", dependencies=dep, status_code=202,
              response_model=S.JobOut)
    def create_eval(body: S.EvalCreate):
        engine.get_chain(body.chain_id)  # 404 before queueing
        return jobs.create(body).out()

    @app.get(f"{API}/evals", dependencies=dep)
    def list_evals():
        return {"jobs": [j.out().model_dump() for j in jobs.list()]}

    @app.get(f"{API}/evals/{{job_id}}", dependencies=dep, response_model=S.JobOut)
    def get_eval(job_id: str):
        return jobs.get(job_id).out()

    # -- runs -----------------------------------------------------------------

    @app.get(f"{API}/runs", dependencies=dep)
    def list_runs(dataset_tag: str | None = None, status: str | None = None):
        return {"runs": [r.summary() for r in
                         engine.tracker.list_runs(dataset_tag=dataset_tag,
                                                  status=status)]}

    @app.get(f"{API}/runs/compare", dependencies=dep)
    def compare_runs(ids: str = Query(...)):
        run_ids = [x for x in ids.split(",") if x]
        if len(run_ids) < 2:
            raise ChainError("compare needs at least two run ids")
        return engine.tracker.compare_runs(run_ids)

    @app.get(f"{API}/runs/{{run_id}}", dependencies=dep)
    def get_run(run_id: str):
        record = engine.tracker.get(run_id)
        return {"run_id": record.run_id, "created_at": record.created_at,
                "status": record.status, "dataset_tag": record.dataset_tag,
                "metrics": record.metrics, "chain": record.chain_document,
                "config": record.config_snapshot,
                "artifacts": [p.rsplit("/", 1)[-1] for p in record.artifact_paths]}

    @app.get(f"{API}/runs/{{run_id}}/instances", dependencies=dep)
    def run_instances(run_id: str, limit: int = 100, offset: int = 0):
        import json as _json
        path = engine.tracker.artifact_path(run_id, "instances.jsonl")
        rows = []
        with open(path, "r", encoding="utf-8") as f:
            for i, line in enumerate(f):
                if i < offset:
                    continue
                if len(rows) >= limit:
                    break
                rows.append(_json.loads(line))
        return {"run_id": run_id, "instances": rows}

    # -- datasets --------------------------------------------------------------

    @app.get(f"{API}/datasets", dependencies=dep)
    def list_datasets():
        return {"datasets": engine.list_datasets()}

    @app.post(f"{API}/datasets", dependencies=dep, status_code=201)
    def register_dataset(body: S.DatasetCreate):
        return engine.register_dataset(body.tag, body.path)

    @app.get(f"{API}/datasets/{{tag}}/instances", dependencies=dep)
    def dataset_instances(tag: str, limit: int = 50, offset: int = 0):
        instances = load_dataset(engine.dataset_path(tag))
        page = instances[offset:offset + limit]
        return {"tag": tag, "total": len(instances),
                "instances": [i.to_dict() for i in page]}

    # -- chat ---------------------------------------------------------------------

    @app.post(f"{API}/chat/sessions", dependencies=dep, status_code=201,
              response_model=S.ChatSessionOut)
    def create_session(body: S.ChatSessionCreate):
        engine.get_chain(body.chain_id)
        session = chats.create(body.chain_id)
        return S.ChatSessionOut(session_id=session.session_id,
                                chain_id=session.chain_id, turns=[])

    @app.get(f"{API}/chat/sessions/{{session_id}}", dependencies=dep,
             response_model=S.ChatSessionOut)
    def get_session(session_id: str):
        session = chats.get(session_id)
        return S.ChatSessionOut(session_id=session.session_id,
                                chain_id=session.chain_id, turns=session.turns)

    @app.post(f"{API}/chat/sessions/{{session_id}}/messages", dependencies=dep,
              response_model=S.ChatTurnOut)
    def chat_turn(session_id: str, body: S.ChatMessageCreate):
        session = chats.get(session_id)
        chain = engine.get_chain(session.chain_id)
        runtime = engine.runtime(chain)
        with session.lock:
            session.turns.append({"role": "user", "text": body.text})
            question = session.history_text()
            try:
                traces = execute_chain(chain, question, runtime)
            except Exception:
                session.turns.pop()  # failed turn leaves history unchanged
                raise
            reply = chain_answer(traces)
            session.turns.append({"role": "assistant", "text": reply})
            turns = [dict(t) for t in session.turns]
        return S.ChatTurnOut(session_id=session.session_id, reply=reply,
                             turns=turns,
                             traces=[_trace_out(chain, t, runtime, None) for t in traces])

    @app.get(f"{API}/health")
    def health():
        return {"status": "ok"}

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        # registered last so /api/v1 routes match first
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
