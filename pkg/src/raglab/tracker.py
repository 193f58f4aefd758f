"""Append-only experiment tracking in a plain directory tree.

One directory per run::

    <root>/<run_id>/
        record.json     run metadata (status, timestamps, dataset tag)
        config.json     full engine config snapshot at begin()
        chain.json      the chain document that ran
        metrics.json    name -> value
        artifacts/      anything logged during the run

Runs are writable only while running; ``finish`` seals them and sealed
files are never rewritten (byte-stable). A root-level ``index.json``
accelerates listing and is updated under a store-wide file lock. Metric
names ending in ``.sec_per_q`` are latencies and compare lower-is-better.

Run ids are ULID-style: 48-bit millisecond timestamp plus randomness in
Crockford base32, so lexicographic order is creation order.
"""

from __future__ import annotations

import json
import os
import secrets
import shutil
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from .errors import ImmutableRunError, NotFoundError

LATENCY_SUFFIX = ".sec_per_q"

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
_ulid_lock = threading.Lock()
_last_ulid: list = [0, 0]  # [timestamp_ms, randomness]


def new_run_id() -> str:
    """ULID: sortable, unique; monotonic within this process."""
    with _ulid_lock:
        ts = int(time.time() * 1000)
        if ts <= _last_ulid[0]:
            ts = _last_ulid[0]
            rand = _last_ulid[1] + 1
        else:
            rand = secrets.randbits(80)
        _last_ulid[0] = ts
        _last_ulid[1] = rand
    out = []
    value = ts
    for _ in range(10):
        out.append(_CROCKFORD[value & 0x1F])
        value >>= 5
    time_part = "".join(reversed(out))
    out = []
    value = rand
    for _ in range(16):
        out.append(_CROCKFORD[value & 0x1F])
        value >>= 5
    return time_part + "".join(reversed(out))


@dataclass
class RunRecord:
    run_id: str
    created_at: str
    status: str                      # running | finished | failed
    dataset_tag: str = ""
    metrics: dict[str, float] = field(default_factory=dict)
    config_snapshot: dict = field(default_factory=dict)
    chain_document: dict = field(default_factory=dict)
    artifact_paths: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {"run_id": self.run_id, "created_at": self.created_at,
                "status": self.status, "dataset_tag": self.dataset_tag,
                "metrics": dict(self.metrics)}


class Tracker:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / ".index.lock"))
        self._active: dict[str, RunRecord] = {}
        self._mutex = threading.Lock()

    # -- lifecycle -----------------------------------------------------------

    def begin(self, config: dict, chain: dict, dataset_tag: str = "") -> str:
        run_id = new_run_id()
        record = RunRecord(run_id=run_id,
                           created_at=_iso_now(),
                           status="running",
                           dataset_tag=dataset_tag,
                           config_snapshot=config,
                           chain_document=chain)
        run_dir = self._run_dir(run_id)
        (run_dir / "artifacts").mkdir(parents=True)
        _write_json(run_dir / "config.json", config)
        _write_json(run_dir / "chain.json", chain)
        _write_json(run_dir / "metrics.json", {})
        self._flush_record(record)
        with self._mutex:
            self._active[run_id] = record
        self._update_index(record)
        return run_id

    def log_metric(self, run_id: str, name: str, value: float) -> None:
        record = self._writable(run_id)
        record.metrics[name] = float(value)
        _write_json(self._run_dir(run_id) / "metrics.json", record.metrics)

    def log_artifact(self, run_id: str, path: str | Path) -> str:
        """Copy an existing file into the run's artifacts directory."""
        record = self._writable(run_id)
        src = Path(path)
        dest = self._run_dir(run_id) / "artifacts" / src.name
        shutil.copyfile(src, dest)
        record.artifact_paths.append(str(dest))
        self._flush_record(record)
        return str(dest)

    def write_artifact(self, run_id: str, name: str, content: str | bytes) -> str:
        record = self._writable(run_id)
        dest = self._run_dir(run_id) / "artifacts" / name
        if isinstance(content, str):
            dest.write_text(content, encoding="utf-8")
        else:
            dest.write_bytes(content)
        record.artifact_paths.append(str(dest))
        self._flush_record(record)
        return str(dest)

    def finish(self, run_id: str, status: str = "finished") -> None:
        if status not in ("finished", "failed"):
            raise ValueError(f"finish status must be finished|failed, got {status!r}")
        record = self._writable(run_id)
        record.status = status
        self._flush_record(record)
        self._update_index(record)
        with self._mutex:
            self._active.pop(run_id, None)

    # -- reads ---------------------------------------------------------------

    def get(self, run_id: str) -> RunRecord:
        run_dir = self._run_dir(run_id)
        record_path = run_dir / "record.json"
        if not record_path.exists():
            raise NotFoundError(f"unknown run {run_id!r}")
        rec = json.loads(record_path.read_text())
        metrics = json.loads((run_dir / "metrics.json").read_text())
        config = json.loads((run_dir / "config.json").read_text())
        chain = json.loads((run_dir / "chain.json").read_text())
        return RunRecord(run_id=rec["run_id"], created_at=rec["created_at"],
                         status=rec["status"], dataset_tag=rec.get("dataset_tag", ""),
                         metrics=metrics, config_snapshot=config,
                         chain_document=chain,
                         artifact_paths=rec.get("artifact_paths", []))

    def artifact_path(self, run_id: str, name: str) -> Path:
        path = self._run_dir(run_id) / "artifacts" / name
        if not path.exists():
            raise NotFoundError(f"run {run_id!r} has no artifact {name!r}")
        return path

    def list_runs(self, dataset_tag: str | None = None,
                  status: str | None = None) -> list[RunRecord]:
        """Newest first (run ids sort by creation time; id breaks ties)."""
        index = self._read_index()
        run_ids = sorted(index, reverse=True)
        out = []
        for run_id in run_ids:
            entry = index[run_id]
            if dataset_tag is not None and entry.get("dataset_tag") != dataset_tag:
                continue
            if status is not None and entry.get("status") != status:
                continue
            out.append(self.get(run_id))
        return out

    def compare_runs(self, run_ids: list[str]) -> dict:
        """Union of metric names across runs, best value marked per metric."""
        if len(run_ids) < 2:
            raise ValueError("compare_runs needs at least two run ids")
        records = [self.get(rid) for rid in run_ids]
        names = sorted({n for r in records for n in r.metrics})
        rows = []
        for name in names:
            values = {r.run_id: r.metrics.get(name) for r in records}
            present = [(v, r.run_id) for r in records
                       if (v := r.metrics.get(name)) is not None]
            lower_better = name.endswith(LATENCY_SUFFIX)
            best = None
            if present:
                # ties go to the earliest run in the requested order
                pick = min if lower_better else max
                best = pick(present, key=lambda p: p[0])[1]
            rows.append({"name": name, "values": values, "best": best,
                         "lower_is_better": lower_better})
        return {"run_ids": list(run_ids), "metrics": rows}

    # -- internals -----------------------------------------------------------

    def _run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def _writable(self, run_id: str) -> RunRecord:
        with self._mutex:
            record = self._active.get(run_id)
        if record is not None:
            return record
        if (self._run_dir(run_id) / "record.json").exists():
            raise ImmutableRunError(f"run {run_id!r} is sealed")
        raise NotFoundError(f"unknown run {run_id!r}")

    def _flush_record(self, record: RunRecord) -> None:
        _write_json(self._run_dir(record.run_id) / "record.json", {
            "run_id": record.run_id,
            "created_at": record.created_at,
            "status": record.status,
            "dataset_tag": record.dataset_tag,
            "artifact_paths": record.artifact_paths,
        })

    def _read_index(self) -> dict:
        path = self.root / "index.json"
        if not path.exists():
            return {}
        return json.loads(path.read_text())

    def _update_index(self, record: RunRecord) -> None:
        with self._lock:
            index = self._read_index()
            index[record.run_id] = {"created_at": record.created_at,
                                    "status": record.status,
                                    "dataset_tag": record.dataset_tag}
            _write_json(self.root / "index.json", index)


def _iso_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()) + f".{int(time.time()*1000)%1000:03d}Z"


def _write_json(path: Path, payload) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True,
                              ensure_ascii=False) + "\n", encoding="utf-8")
    os.replace(tmp, path)
