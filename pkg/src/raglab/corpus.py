"""Passage corpus: ingestion, persistence, lookup.

Input is line-delimited records (JSONL with a field-name shim for common
passage dumps, or ``id<TAB>text<TAB>title`` TSV). Ingest is streaming:
one line in memory at a time when writing straight to the persisted
record file.

Persisted layout (all integers little-endian)::

    magic 'RGLC' | u32 format_version | u64 count
    u32 len + corpus_id | u32 len + source_path | f64 created_at
    u64 offsets[count + 1]          (relative to the records region)
    records: (u32 len + wiki_id)(u32 len + title)(u32 len + text) ...

Titles are stored separately from bodies; callers prepend them
("{title} {text}") only when building index/embedding text, so UIs can
display the two distinctly.
"""

from __future__ import annotations

import io
import json
import mmap
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import IngestError, NotFoundError, PersistenceError, VersionError

MAGIC = b"RGLC"
FORMAT_VERSION = 1

_WIKI_KEYS = ("wiki_id", "wikipedia_id", "_id", "id")
_TITLE_KEYS = ("title", "wikipedia_title")
_TEXT_KEYS = ("text", "contents", "passage")


@dataclass(frozen=True)
class Passage:
    """One titled 100-word knowledge-source unit."""

    passage_id: int
    wiki_id: str
    title: str
    text: str

    def index_text(self) -> str:
        """Text handed to indexers/embedders: title prepended to the body."""
        return f"{self.title} {self.text}"


class Corpus:
    """Immutable, ordered passage collection; passage_id == list position."""

    def __init__(self, corpus_id: str, store: "_Store", source_path: str = "",
                 created_at: float | None = None):
        self.corpus_id = corpus_id
        self.source_path = source_path
        self.created_at = time.time() if created_at is None else created_at
        self._store = store

    def __len__(self) -> int:
        return len(self._store)

    def __iter__(self) -> Iterator[Passage]:
        for i in range(len(self._store)):
            yield self._store.get(i)

    @property
    def passages(self) -> "Corpus":
        return self

    def __getitem__(self, passage_id: int) -> Passage:
        return get_passage(self, passage_id)


class _Store:
    def __len__(self) -> int:  # pragma: no cover - interface stub
        raise NotImplementedError

    def get(self, i: int) -> Passage:  # pragma: no cover - interface stub
        raise NotImplementedError


class _ListStore(_Store):
    def __init__(self, passages: list[Passage]):
        self._passages = passages

    def __len__(self) -> int:
        return len(self._passages)

    def get(self, i: int) -> Passage:
        return self._passages[i]


class _FileStore(_Store):
    """Offset-indexed record file; fetches passages without loading the corpus."""

    def __init__(self, data: mmap.mmap, offsets: list[int], base: int):
        self._data = data
        self._offsets = offsets
        self._base = base

    def __len__(self) -> int:
        return len(self._offsets) - 1

    def get(self, i: int) -> Passage:
        start = self._base + self._offsets[i]
        end = self._base + self._offsets[i + 1]
        buf = self._data[start:end]
        pos = 0
        fields = []
        for _ in range(3):
            if pos + 4 > len(buf):
                raise PersistenceError("corrupt corpus record")
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            fields.append(buf[pos:pos + n].decode("utf-8"))
            pos += n
        return Passage(passage_id=i, wiki_id=fields[0], title=fields[1], text=fields[2])


def parse_record(line: str, lineno: int) -> tuple[str, str, str]:
    """Map one input line onto (wiki_id, title, text); raises IngestError."""
    line = line.rstrip("\n")
    if line.startswith("{"):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise IngestError(f"line {lineno}: invalid JSON ({e.msg})") from None
        wiki_id = _first(rec, _WIKI_KEYS)
        title = _first(rec, _TITLE_KEYS)
        text = _first(rec, _TEXT_KEYS)
        if wiki_id is None:
            raise IngestError(f"line {lineno}: missing field wiki_id")
        if title is None:
            raise IngestError(f"line {lineno}: missing field title")
        if text is None:
            raise IngestError(f"line {lineno}: missing field text")
    else:
        cols = line.split("\t")
        if len(cols) != 3:
            raise IngestError(f"line {lineno}: expected 3 tab-separated fields, got {len(cols)}")
        wiki_id, text, title = cols[0], cols[1], cols[2]
    wiki_id, title, text = str(wiki_id).strip(), str(title).strip(), text.strip()
    if not wiki_id:
        raise IngestError(f"line {lineno}: missing field wiki_id")
    if not title:
        raise IngestError(f"line {lineno}: missing field title")
    if not text:
        raise IngestError(f"line {lineno}: missing field text")
    return wiki_id, title, text


def _first(rec: dict, keys: tuple[str, ...]):
    for k in keys:
        if k in rec and rec[k] not in (None, ""):
            return rec[k]
    return None


def _iter_records(path: str | Path) -> Iterator[tuple[str, str, str]]:
    with open(path, "r", encoding="utf-8") as f:
        lineno = 0
        for raw in f:
            lineno += 1
            if not raw.strip():
                # keep "line k of input becomes passage_id k": blanks are malformed
                raise IngestError(f"line {lineno}: empty line")
            if lineno == 1 and raw.rstrip("\n").lower() == "id\ttext\ttitle":
                continue
            yield parse_record(raw, lineno)


def ingest_passages(path: str | Path, corpus_id: str,
                    out_path: str | Path | None = None) -> Corpus:
    """Build a corpus from a passage file, assigning sequential 0-based ids.

    With ``out_path`` the records stream straight into the persisted file
    (bounded memory) and the returned corpus is file-backed; without it
    the passages are held in memory.
    """
    source = str(path)
    if not Path(path).exists():
        raise IngestError(f"input file not found: {source}")
    if out_path is not None:
        corpus = _ingest_to_file(path, corpus_id, out_path)
    else:
        passages = [
            Passage(passage_id=i, wiki_id=w, title=t, text=x)
            for i, (w, t, x) in enumerate(_iter_records(path))
        ]
        corpus = Corpus(corpus_id=corpus_id, store=_ListStore(passages), source_path=source)
    if len(corpus) == 0:
        raise IngestError(f"no passages found in {source}")
    return corpus


def get_passage(corpus: Corpus, passage_id: int) -> Passage:
    if not 0 <= passage_id < len(corpus):
        raise NotFoundError(
            f"passage {passage_id} not in corpus {corpus.corpus_id!r} "
            f"(size {len(corpus)})")
    return corpus._store.get(passage_id)


def _encode_record(wiki_id: str, title: str, text: str) -> bytes:
    out = io.BytesIO()
    for s in (wiki_id, title, text):
        b = s.encode("utf-8")
        out.write(struct.pack("<I", len(b)))
        out.write(b)
    return out.getvalue()


def _write_header(f, corpus: Corpus, count: int):
    f.write(MAGIC)
    f.write(struct.pack("<I", FORMAT_VERSION))
    f.write(struct.pack("<Q", count))
    for s in (corpus.corpus_id, corpus.source_path):
        b = s.encode("utf-8")
        f.write(struct.pack("<I", len(b)))
        f.write(b)
    f.write(struct.pack("<d", corpus.created_at))


def _ingest_to_file(path: str | Path, corpus_id: str, out_path: str | Path) -> Corpus:
    tmp_records = Path(str(out_path) + ".records.tmp")
    offsets = [0]
    try:
        with open(tmp_records, "wb") as rec_f:
            for wiki_id, title, text in _iter_records(path):
                rec_f.write(_encode_record(wiki_id, title, text))
                offsets.append(rec_f.tell())
        corpus = Corpus(corpus_id=corpus_id, store=_ListStore([]), source_path=str(path))
        with open(out_path, "wb") as f:
            _write_header(f, corpus, len(offsets) - 1)
            f.write(struct.pack(f"<{len(offsets)}Q", *offsets))
            with open(tmp_records, "rb") as rec_f:
                while chunk := rec_f.read(1 << 20):
                    f.write(chunk)
    finally:
        tmp_records.unlink(missing_ok=True)
    return restore(out_path)


def persist(corpus: Corpus, path: str | Path) -> None:
    """Write the corpus to ``path``; restore(persist(c)) is field-identical."""
    offsets = [0]
    tmp_records = Path(str(path) + ".records.tmp")
    try:
        with open(tmp_records, "wb") as rec_f:
            for p in corpus:
                rec_f.write(_encode_record(p.wiki_id, p.title, p.text))
                offsets.append(rec_f.tell())
        with open(path, "wb") as f:
            _write_header(f, corpus, len(corpus))
            f.write(struct.pack(f"<{len(offsets)}Q", *offsets))
            with open(tmp_records, "rb") as rec_f:
                while chunk := rec_f.read(1 << 20):
                    f.write(chunk)
    finally:
        tmp_records.unlink(missing_ok=True)


def restore(path: str | Path) -> Corpus:
    """Load a persisted corpus; passages are fetched lazily via mmap."""
    try:
        f = open(path, "rb")
    except OSError as e:
        raise PersistenceError(f"cannot open corpus file: {e}") from None
    with f:
        head = f.read(4 + 4 + 8)
        if len(head) < 16 or head[:4] != MAGIC:
            raise PersistenceError(f"not a corpus file: {path}")
        (version,) = struct.unpack_from("<I", head, 4)
        if version > FORMAT_VERSION:
            raise VersionError(
                f"corpus format version {version} is newer than supported "
                f"({FORMAT_VERSION})")
        (count,) = struct.unpack_from("<Q", head, 8)
        try:
            corpus_id = _read_str(f)
            source_path = _read_str(f)
            created_at = struct.unpack("<d", _read_exact(f, 8))[0]
            offsets_raw = _read_exact(f, (count + 1) * 8)
        except PersistenceError:
            raise
        offsets = list(struct.unpack(f"<{count + 1}Q", offsets_raw))
        base = f.tell()
        f.seek(0, 2)
        size = f.tell()
        if base + offsets[-1] > size:
            raise PersistenceError(f"truncated corpus file: {path}")
        data = mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ)
    store = _FileStore(data, offsets, base)
    return Corpus(corpus_id=corpus_id, store=store, source_path=source_path,
                  created_at=created_at)


def _read_exact(f, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise PersistenceError("truncated corpus file")
    return b


def _read_str(f) -> str:
    (n,) = struct.unpack("<I", _read_exact(f, 4))
    return _read_exact(f, n).decode("utf-8")
