"""raglab: a development-and-evaluation engine for retrieval-augmented
LLM pipelines — sparse/dense indexing, templated inference chains, KILT
metrics, latency accounting, and experiment tracking behind an HTTP API
and CLI."""

from .chains import ActionSpec, ChainRuntime, ChainSpec, StepTrace
from .corpus import Corpus, Passage, get_passage, ingest_passages
from .engine import Engine, EngineConfig
from .retrieval import RetrievalHit
from .templates import ExecutionContext, TemplateSpec, parse_template, render_template

__version__ = "0.1.0"

__all__ = [
    "ActionSpec",
    "ChainRuntime",
    "ChainSpec",
    "Corpus",
    "Engine",
    "EngineConfig",
    "ExecutionContext",
    "Passage",
    "RetrievalHit",
    "StepTrace",
    "TemplateSpec",
    "get_passage",
    "ingest_passages",
    "parse_template",
    "render_template",
    "__version__",
]
