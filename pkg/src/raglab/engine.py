"""Engine facade: one object owning corpora, indices, chains, datasets,
backends, and the run tracker, rooted at a workspace directory.

Layout under the root::

    corpora/<corpus_id>.corpus      persisted passage stores
    indices/<index_id>.idx|.bm25    persisted search indices
    chains/<chain_id>.json          chain documents
    registry.json                   corpus/index/dataset catalog
    runs/                           tracker store

The server exposes this object over HTTP; the CLI drives it in-process.
Both therefore share one code path, and an eval run launched from either
surface produces identical records.

A run's config snapshot embeds the full engine config plus the eval
request, which is exactly what :meth:`Engine.replay` needs to re-execute a
finished run and check its metrics reproduce.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bm25 as bm25_mod
from . import corpus as corpus_mod
from . import vindex as vindex_mod
from .chains import ChainRuntime, ChainSpec
from .embeddings import EmbeddingBackendConfig, EmbeddingGateway
from .errors import NotFoundError, RagLabError
from .evals import EvalReport, load_dataset, run_eval
from .llm import LlmBackendConfig, LlmGateway
from .retrievers import DenseRetriever, SparseRetriever
from .tracker import LATENCY_SUFFIX, Tracker

INDEX_KINDS = ("bm25", "flat", "hnsw", "disk")
EMBED_BATCH = 256


@dataclass
class EngineConfig:
    root: str = "raglab_data"
    embedding: EmbeddingBackendConfig = field(default_factory=EmbeddingBackendConfig)
    llm: LlmBackendConfig = field(
        default_factory=lambda: LlmBackendConfig(kind="mock"))
    eval_concurrency: int = 4
    server_token: str = ""

    def to_dict(self) -> dict:
        return {"root": str(self.root),
                "embedding": self.embedding.to_dict(),
                "llm": self.llm.to_dict(),
                "eval_concurrency": self.eval_concurrency,
                "server_token": self.server_token}

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        return cls(root=d.get("root", "raglab_data"),
                   embedding=EmbeddingBackendConfig.from_dict(
                       d.get("embedding", {"kind": "mock"})),
                   llm=LlmBackendConfig.from_dict(d.get("llm", {"kind": "mock"})),
                   eval_concurrency=d.get("eval_concurrency", 4),
                   server_token=d.get("server_token", ""))

    @classmethod
    def from_file(cls, path: str | Path) -> "EngineConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except OSError as e:
            raise RagLabError(f"cannot read config file: {e}") from None
        except json.JSONDecodeError as e:
            raise RagLabError(f"config file is not valid JSON: {e}") from None


class Engine:
    def __init__(self, config: EngineConfig):
        self.config = config
        self.root = Path(config.root)
        for sub in ("corpora", "indices", "chains", "runs"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self.tracker = Tracker(self.root / "runs")
        self.embedder = EmbeddingGateway(config.embedding)
        self.llm = LlmGateway(config.llm)
        self._registry_lock = threading.Lock()
        self._corpora: dict[str, corpus_mod.Corpus] = {}
        self._retrievers: dict[str, object] = {}
        self._cache_lock = threading.Lock()

    @classmethod
    def from_config_file(cls, path: str | Path) -> "Engine":
        return cls(EngineConfig.from_file(path))

    # -- registry --------------------------------------------------------

    def _registry_path(self) -> Path:
        return self.root / "registry.json"

    def _read_registry(self) -> dict:
        path = self._registry_path()
        if not path.exists():
            return {"corpora": {}, "indices": {}, "datasets": {}}
        return json.loads(path.read_text())

    def _update_registry(self, section: str, key: str, value) -> None:
        with self._registry_lock:
            reg = self._read_registry()
            reg.setdefault(section, {})[key] = value
            tmp = self._registry_path().with_suffix(".tmp")
            tmp.write_text(json.dumps(reg, indent=2, sort_keys=True) + "\n")
            tmp.replace(self._registry_path())

    # -- corpora ----------------------------------------------------------

    def ingest(self, path: str | Path, corpus_id: str) -> dict:
        out_path = self.root / "corpora" / f"{corpus_id}.corpus"
        corpus = corpus_mod.ingest_passages(path, corpus_id, out_path=out_path)
        self._update_registry("corpora", corpus_id,
                              {"path": str(out_path), "size": len(corpus),
                               "source_path": str(path)})
        with self._cache_lock:
            self._corpora[corpus_id] = corpus
        return {"corpus_id": corpus_id, "size": len(corpus), "path": str(out_path)}

    def corpus(self, corpus_id: str) -> corpus_mod.Corpus:
        with self._cache_lock:
            cached = self._corpora.get(corpus_id)
        if cached is not None:
            return cached
        entry = self._read_registry()["corpora"].get(corpus_id)
        if entry is None:
            raise NotFoundError(f"unknown corpus {corpus_id!r}")
        loaded = corpus_mod.restore(entry["path"])
        with self._cache_lock:
            self._corpora[corpus_id] = loaded
        return loaded

    def list_corpora(self) -> list[dict]:
        reg = self._read_registry()["corpora"]
        return [{"corpus_id": cid, **entry} for cid, entry in sorted(reg.items())]

    # -- indices ----------------------------------------------------------

    def build_index(self, corpus_id: str, kind: str, params: dict | None = None,
                    index_id: str = "") -> dict:
        if kind not in INDEX_KINDS:
            raise RagLabError(f"unknown index kind {kind!r} (expected {INDEX_KINDS})")
        params = dict(params or {})
        corpus = self.corpus(corpus_id)
        index_id = index_id or f"{corpus_id}.{kind}"
        if kind == "bm25":
            path = self.root / "indices" / f"{index_id}.bm25"
            index = bm25_mod.build_bm25(
                corpus, k1=params.get("k1", bm25_mod.DEFAULT_K1),
                b=params.get("b", bm25_mod.DEFAULT_B))
            bm25_mod.save_index(index, path)
        else:
            path = self.root / "indices" / f"{index_id}.idx"
            vectors, ids = self._embed_corpus(corpus)
            if kind == "flat":
                index = vindex_mod.build_flat(vectors, ids)
                vindex_mod.save_index(index, path)
            elif kind == "hnsw":
                index = vindex_mod.build_hnsw(
                    vectors, ids,
                    m=params.get("m", vindex_mod.DEFAULT_M),
                    ef_construction=params.get(
                        "ef_construction", vindex_mod.DEFAULT_EF_CONSTRUCTION),
                    seed=params.get("seed", 0),
                    ef_search=params.get("ef_search", vindex_mod.DEFAULT_EF_SEARCH))
                vindex_mod.save_index(index, path)
            else:
                index = vindex_mod.build_disk_tier(
                    vectors, ids, path,
                    m=params.get("m", vindex_mod.DEFAULT_M),
                    ef_construction=params.get(
                        "ef_construction", vindex_mod.DEFAULT_EF_CONSTRUCTION),
                    seed=params.get("seed", 0),
                    ef_search=params.get("ef_search", vindex_mod.DEFAULT_EF_SEARCH),
                    rerank_multiplier=params.get(
                        "rerank_multiplier", vindex_mod.DEFAULT_RERANK_MULTIPLIER))
        entry = {"kind": kind, "corpus_id": corpus_id, "params": params,
                 "path": str(path)}
        self._update_registry("indices", index_id, entry)
        with self._cache_lock:
            self._retrievers.pop(index_id, None)
        return {"index_id": index_id, **entry}

    def _embed_corpus(self, corpus) -> tuple[np.ndarray, list[int]]:
        chunks = []
        ids: list[int] = []
        batch: list = []
        for passage in corpus:
            batch.append(passage)
            if len(batch) == EMBED_BATCH:
                chunks.append(self.embedder.embed_passages(batch))
                ids.extend(p.passage_id for p in batch)
                batch = []
        if batch:
            chunks.append(self.embedder.embed_passages(batch))
            ids.extend(p.passage_id for p in batch)
        return np.concatenate(chunks, axis=0), ids

    def list_indices(self) -> list[dict]:
        reg = self._read_registry()["indices"]
        return [{"index_id": iid, **entry} for iid, entry in sorted(reg.items())]

    def retriever(self, index_id: str):
        with self._cache_lock:
            cached = self._retrievers.get(index_id)
        if cached is not None:
            return cached
        entry = self._read_registry()["indices"].get(index_id)
        if entry is None:
            raise NotFoundError(f"unknown index {index_id!r}")
        corpus = self.corpus(entry["corpus_id"])
        if entry["kind"] == "bm25":
            retriever = SparseRetriever(bm25_mod.load_index(entry["path"]), corpus)
        else:
            retriever = DenseRetriever(vindex_mod.load_index(entry["path"]),
                                       self.embedder, corpus)
        with self._cache_lock:
            self._retrievers[index_id] = retriever
        return retriever

    # -- chains -----------------------------------------------------------

    def save_chain(self, spec: ChainSpec) -> dict:
        spec.validate()
        path = self.root / "chains" / f"{spec.chain_id}.json"
        path.write_text(json.dumps(spec.to_dict(), indent=2, ensure_ascii=False) + "\n")
        return spec.to_dict()

    def get_chain(self, chain_id: str) -> ChainSpec:
        path = self.root / "chains" / f"{chain_id}.json"
        if not path.exists():
            raise NotFoundError(f"unknown chain {chain_id!r}")
        return ChainSpec.from_dict(json.loads(path.read_text()))

    def list_chains(self) -> list[dict]:
        out = []
        for path in sorted((self.root / "chains").glob("*.json")):
            out.append(json.loads(path.read_text()))
        return out

    # -- datasets -----------------------------------------------------------

    def register_dataset(self, tag: str, path: str | Path) -> dict:
        if not Path(path).exists():
            raise NotFoundError(f"dataset file not found: {path}")
        instances = load_dataset(path, limit=1)  # validates format eagerly
        if not instances:
            raise RagLabError(f"dataset {path} has no instances")
        self._update_registry("datasets", tag, {"path": str(path)})
        return {"tag": tag, "path": str(path)}

    def list_datasets(self) -> list[dict]:
        reg = self._read_registry()["datasets"]
        return [{"tag": tag, **entry} for tag, entry in sorted(reg.items())]

    def dataset_path(self, tag: str) -> str:
        entry = self._read_registry()["datasets"].get(tag)
        if entry is None:
            raise NotFoundError(f"unknown dataset {tag!r}")
        return entry["path"]

    def load_instances(self, tag_or_path: str, limit: int | None = None):
        reg = self._read_registry()["datasets"]
        path = reg[tag_or_path]["path"] if tag_or_path in reg else tag_or_path
        if not Path(path).exists():
            raise NotFoundError(f"unknown dataset {tag_or_path!r}")
        return load_dataset(path, limit=limit)

    # -- execution ----------------------------------------------------------

    def runtime(self, chain: ChainSpec) -> ChainRuntime:
        retrievers = {}
        for action in chain.actions:
            if action.operator == "Retriever":
                retrievers[action.retriever_ref] = self.retriever(action.retriever_ref)
        return ChainRuntime(llm=self.llm, retrievers=retrievers)

    def run_eval(self, chain: ChainSpec | str, dataset: str, metrics: list[str],
                 limit: int | None = None, concurrency: int | None = None,
                 persist: bool = True, on_progress=None) -> EvalReport:
        if isinstance(chain, str):
            chain = self.get_chain(chain)
        instances = self.load_instances(dataset, limit=limit)
        runtime = self.runtime(chain)
        snapshot = {
            "engine": self.config.to_dict(),
            "eval": {"chain_id": chain.chain_id, "dataset": dataset,
                     "metrics": list(metrics), "limit": limit},
        }
        return run_eval(chain, instances, runtime, metrics,
                        concurrency=concurrency or self.config.eval_concurrency,
                        tracker=self.tracker if persist else None,
                        config_snapshot=snapshot,
                        dataset_tag=dataset if dataset in
                        self._read_registry()["datasets"] else chain.dataset_tag,
                        on_progress=on_progress)

    def replay(self, run_id: str) -> dict:
        """Re-execute a finished run from its config snapshot, without
        persisting, and compare non-latency metrics exactly."""
        record = self.tracker.get(run_id)
        snapshot = record.config_snapshot
        if not snapshot.get("eval"):
            raise RagLabError(f"run {run_id!r} has no eval snapshot to replay")
        engine = Engine(EngineConfig.from_dict(snapshot["engine"]))
        chain = ChainSpec.from_dict(record.chain_document)
        ev = snapshot["eval"]
        report = engine.run_eval(chain, ev["dataset"], ev["metrics"],
                                 limit=ev.get("limit"), persist=False)
        replayed = {k: v.value for k, v in report.metrics.items()}
        original = {k: v for k, v in record.metrics.items()
                    if not k.endswith(LATENCY_SUFFIX)}
        return {"run_id": run_id, "original": original, "replayed": replayed,
                "matches": replayed == original}
