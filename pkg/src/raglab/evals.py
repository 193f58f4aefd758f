"""Benchmark loading, chain evaluation, metric aggregation, highlighting.

Datasets are KILT-style line-delimited records::

    {"id": ..., "input": ..., "output": [{"answer": ..., "provenance":
        [{"wikipedia_id": ...}, ...]}, ...]}

Gold answers are collected from every output entry carrying an answer;
each output entry with provenance contributes one provenance set.

``run_eval`` executes the chain once per instance (bounded worker pool),
scores the final action's output with the requested metrics, aggregates
per-action latency, and (when given a tracker) persists the whole report
as an immutable run. Per-instance failures are recorded, not fatal; a run
with more than half its instances failing is marked failed.
"""

from __future__ import annotations

import json
import re
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from threading import Lock
from typing import Callable, Sequence

from .chains import ChainExecutionError, ChainRuntime, ChainSpec, execute_chain
from .errors import IngestError, RagLabError
from .metrics import (
    MetricValue,
    ProvenanceSet,
    exact_match,
    has_answer,
    kilt_conditioned,
    normalize_answer,
    page_dedup,
    r_precision,
    recall_at_k,
    rouge_l,
    token_f1,
)

ERROR_MARKER = "<error>"
FAILURE_THRESHOLD = 0.5

_ANSWER_METRICS: dict[str, Callable] = {
    "em": exact_match,
    "accuracy": exact_match,
    "f1": token_f1,
    "rl": rouge_l,
    "rouge_l": rouge_l,
    "has_answer": has_answer,
}
_KILT_BASE = {"kilt_em": "em", "kilt_accuracy": "accuracy",
              "kilt_f1": "f1", "kilt_rl": "rl"}
_RECALL_RE = re.compile(r"^recall@(\d+)$")


@dataclass
class EvalInstance:
    instance_id: str
    question: str
    gold_answers: list[str] = field(default_factory=list)
    provenance: list[ProvenanceSet] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"instance_id": self.instance_id, "question": self.question,
                "gold_answers": list(self.gold_answers),
                "provenance": [list(p.wiki_ids) for p in self.provenance]}


@dataclass
class EvalReport:
    run_id: str
    dataset_tag: str
    status: str
    n_instances: int
    metrics: dict[str, MetricValue]
    latency: dict[str, float]                 # "<stage>.sec_per_q" -> mean seconds
    per_instance: list[dict]

    def aggregates(self) -> dict[str, float]:
        out = {name: mv.value for name, mv in self.metrics.items()}
        out.update(self.latency)
        return out

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "dataset_tag": self.dataset_tag,
                "status": self.status, "n_instances": self.n_instances,
                "metrics": {k: v.value for k, v in self.metrics.items()},
                "latency": dict(self.latency)}


def known_metric(name: str) -> bool:
    return (name in _ANSWER_METRICS or name in _KILT_BASE
            or name in ("rprec",) or bool(_RECALL_RE.match(name)))


def resolve_metrics(names: Sequence[str]) -> list[str]:
    out = []
    for name in names:
        name = name.strip()
        if not name:
            continue
        if not known_metric(name):
            raise RagLabError(f"unknown metric {name!r}")
        out.append(name)
    if not out:
        raise RagLabError("no metrics requested")
    return out


def load_dataset(path: str | Path, limit: int | None = None) -> list[EvalInstance]:
    """Read KILT-style instances in file order, truncated to ``limit``."""
    instances: list[EvalInstance] = []
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise IngestError(f"cannot open dataset: {e}") from None
    with f:
        for lineno, raw in enumerate(f, start=1):
            if limit is not None and len(instances) >= limit:
                break
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
                instance_id = str(rec["id"])
                question = rec["input"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise IngestError(f"line {lineno}: malformed dataset record ({e})") from None
            golds: list[str] = []
            provenance: list[ProvenanceSet] = []
            for out in rec.get("output", []):
                answer = out.get("answer")
                if answer is not None and str(answer) != "":
                    golds.append(str(answer))
                prov_ids = [str(p["wikipedia_id"]) for p in out.get("provenance", [])
                            if p.get("wikipedia_id") not in (None, "")]
                if prov_ids:
                    provenance.append(ProvenanceSet(tuple(prov_ids)))
            instances.append(EvalInstance(instance_id=instance_id, question=question,
                                          gold_answers=golds, provenance=provenance))
    return instances


def highlight_spans(text: str, golds: Sequence[str],
                    provenance_ids: Sequence[str] | None = None) -> list[dict]:
    """Spans where a normalized gold matches at token boundaries, plus
    literal occurrences of provenance page ids. Non-overlapping per kind,
    sorted by start."""
    spans: list[tuple[int, int, str]] = []
    tokens = [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]
    seen_golds = {normalize_answer(g) for g in golds if normalize_answer(g)}
    for g_norm in seen_golds:
        g_len = len(g_norm.split())
        for i in range(len(tokens)):
            for j in range(i, min(i + g_len + 3, len(tokens))):
                start, end = tokens[i][0], tokens[j][1]
                if normalize_answer(text[start:end]) == g_norm:
                    spans.append(_trimmed(text, start, end) + ("gold_answer",))
                    break
    for wiki_id in provenance_ids or []:
        if not wiki_id:
            continue
        pos = text.find(wiki_id)
        while pos != -1:
            spans.append((pos, pos + len(wiki_id), "provenance_hit"))
            pos = text.find(wiki_id, pos + 1)
    return _dedupe_spans(spans)


def _trimmed(text: str, start: int, end: int) -> tuple[int, int]:
    # shrink edges over punctuation/whitespace so the span hugs the match
    strippable = set(string.punctuation) | {" ", "\t", "\n", "\r"}
    while start < end and text[start] in strippable:
        start += 1
    while end > start and text[end - 1] in strippable:
        end -= 1
    return start, end


def _dedupe_spans(spans: list[tuple[int, int, str]]) -> list[dict]:
    out: list[dict] = []
    for kind in ("gold_answer", "provenance_hit"):
        last_end = -1
        for start, end, k in sorted(s for s in spans if s[2] == kind):
            if start >= last_end and end > start:
                out.append({"start": start, "end": end, "kind": kind})
                last_end = end
    out.sort(key=lambda s: (s["start"], s["end"]))
    return out


def run_eval(chain: ChainSpec, instances: list[EvalInstance], runtime: ChainRuntime,
             metric_names: Sequence[str], concurrency: int = 1,
             tracker=None, config_snapshot: dict | None = None,
             dataset_tag: str = "", on_progress=None) -> EvalReport:
    """Execute the chain over every instance and aggregate metrics/latency."""
    chain.validate()
    names = resolve_metrics(metric_names)
    if not instances:
        raise RagLabError("no instances to evaluate")
    tag = dataset_tag or chain.dataset_tag
    run_id = ""
    if tracker is not None:
        run_id = tracker.begin(config=config_snapshot or {},
                               chain=chain.to_dict(), dataset_tag=tag)
    progress_lock = Lock()
    completed = 0

    def one(instance: EvalInstance) -> dict:
        nonlocal completed
        t0 = time.perf_counter()
        try:
            traces = execute_chain(chain, instance.question, runtime)
            answer = traces[-1].output
            error = ""
        except ChainExecutionError as e:
            traces = e.traces
            answer = ERROR_MARKER
            error = str(e)
        total = time.perf_counter() - t0
        pages: list[str] = []
        for t in traces:
            if t.operator == "Retriever":
                pages = page_dedup([h.wiki_id for h in t.hits])
                break
        if on_progress is not None:
            with progress_lock:
                completed += 1
                done = completed
            on_progress(done, len(instances))
        return {
            "instance_id": instance.instance_id,
            "answer": answer,
            "error": error,
            "retrieved_pages": pages,
            "steps": [{"action_index": t.action_index, "operator": t.operator,
                       "latency_s": t.latency_s,
                       "output_chars": len(t.output)} for t in traces],
            "latency_total_s": total,
            "step_latencies": {t.action_index: t.latency_s for t in traces},
        }

    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            rows = list(pool.map(one, instances))
    else:
        rows = [one(inst) for inst in instances]

    failures = sum(1 for r in rows if r["error"])
    metrics = _score_rows(rows, instances, names)
    latency = _aggregate_latency(rows, chain)
    # per-instance records stay latency-free so identical inputs produce
    # byte-identical records regardless of where the eval ran
    for row, inst in zip(rows, instances):
        row["highlight_spans"] = highlight_spans(
            row["answer"], inst.gold_answers,
            [w for p in inst.provenance for w in p.wiki_ids])
        del row["step_latencies"]
        del row["latency_total_s"]
        for step in row["steps"]:
            step.pop("latency_s", None)
    status = "failed" if failures > FAILURE_THRESHOLD * len(rows) else "finished"
    report = EvalReport(run_id=run_id, dataset_tag=tag, status=status,
                        n_instances=len(rows), metrics=metrics, latency=latency,
                        per_instance=rows)
    if tracker is not None:
        for name, value in report.aggregates().items():
            tracker.log_metric(run_id, name, value)
        lines = "\n".join(json.dumps(r, ensure_ascii=False) for r in rows)
        tracker.write_artifact(run_id, "instances.jsonl", lines + "\n")
        tracker.finish(run_id, status=status)
    return report


def _score_rows(rows: list[dict], instances: list[EvalInstance],
                names: list[str]) -> dict[str, MetricValue]:
    # base per-instance values; retrieval metrics skipped without provenance
    base: dict[str, list[float]] = {n: [] for n in names}
    rprec_cache: list[float | None] = []
    for row, inst in zip(rows, instances):
        failed = bool(row["error"])
        rprec_value: float | None = None
        if inst.provenance:
            rprec_value = 0.0 if failed else r_precision(row["retrieved_pages"],
                                                         inst.provenance)
        rprec_cache.append(rprec_value)
        for name in names:
            value = _score_one(name, row, inst, failed, rprec_value)
            if value is not None:
                base[name].append(value)
                row.setdefault("metrics", {})[name] = value
    out: dict[str, MetricValue] = {}
    for name in names:
        values = base[name]
        if values:
            out[name] = MetricValue(name=name, value=sum(values) / len(values),
                                    per_instance=values)
    return out


def _score_one(name: str, row: dict, inst: EvalInstance, failed: bool,
               rprec_value: float | None) -> float | None:
    recall_match = _RECALL_RE.match(name)
    if name == "rprec" or recall_match:
        if not inst.provenance:
            return None
        if failed:
            return 0.0
        if name == "rprec":
            return rprec_value
        return recall_at_k(row["retrieved_pages"], inst.provenance,
                           k=int(recall_match.group(1)))
    if name in _KILT_BASE:
        if not inst.provenance or not inst.gold_answers:
            return None
        if failed:
            return 0.0
        downstream = _ANSWER_METRICS[_KILT_BASE[name]](row["answer"], inst.gold_answers)
        return kilt_conditioned(downstream, rprec_value)
    # plain answer metric
    if not inst.gold_answers:
        return None
    if failed:
        return 0.0
    return _ANSWER_METRICS[name](row["answer"], inst.gold_answers)


def _aggregate_latency(rows: list[dict], chain: ChainSpec) -> dict[str, float]:
    n = len(rows)
    out: dict[str, float] = {}
    for k, action in enumerate(chain.actions):
        vals = [r["step_latencies"].get(k, 0.0) for r in rows]
        out[f"action{k}.{action.operator.lower()}.sec_per_q"] = sum(vals) / n
    out["total.sec_per_q"] = sum(r["latency_total_s"] for r in rows) / n
    return out
