"""Unigram BM25 inverted index over a corpus.

Documents are indexed as ``"{title} {text}"``. The analyzer is shared by
documents and queries: lowercase, split on any non-alphanumeric codepoint,
no stemming, no stopwords. The idf is the non-negative variant
``ln(1 + (N - df + 0.5) / (df + 0.5))``.

Defaults k1 = 0.9 and b = 0.4. Queries longer than MAX_QUERY_TOKENS are
truncated with a warning instead of failing.
"""

from __future__ import annotations

import logging
import math
import re
import struct
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus
from .errors import BuildError, NotFoundError, PersistenceError, VersionError
from .retrieval import RetrievalHit

logger = logging.getLogger(__name__)

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4
DEFAULT_TOP_K = 5
MAX_QUERY_TOKENS = 4096

MAGIC = b"RGLB"
FORMAT_VERSION = 1

# unicode alphanumerics; underscore is a separator
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric codepoint."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[int, int]]]   # term -> [(passage_id, tf)], pid-sorted
    doc_len: list[int]
    avgdl: float
    n_docs: int
    df: dict[str, int]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    doc_meta: list[tuple[str, str]] = field(default_factory=list)  # (wiki_id, title)

    def __post_init__(self):
        if not 0.0 <= self.b <= 1.0:
            raise BuildError(f"b must lie in [0, 1], got {self.b}")
        if self.k1 < 0:
            raise BuildError(f"k1 must be >= 0, got {self.k1}")


def build_bm25(corpus: Corpus, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> InvertedIndex:
    """Index ``"{title} {text}"`` of every passage."""
    if len(corpus) == 0:
        raise BuildError("cannot build a BM25 index over an empty corpus")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_len: list[int] = []
    doc_meta: list[tuple[str, str]] = []
    for passage in corpus:
        tokens = tokenize(passage.index_text())
        doc_len.append(len(tokens))
        doc_meta.append((passage.wiki_id, passage.title))
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((passage.passage_id, tf))
    n_docs = len(doc_len)
    df = {term: len(plist) for term, plist in postings.items()}
    avgdl = sum(doc_len) / n_docs
    return InvertedIndex(postings=postings, doc_len=doc_len, avgdl=avgdl,
                         n_docs=n_docs, df=df, k1=k1, b=b, doc_meta=doc_meta)


def _idf(index: InvertedIndex, term: str) -> float:
    df = index.df.get(term, 0)
    return math.log(1.0 + (index.n_docs - df + 0.5) / (df + 0.5))


def bm25_score(index: InvertedIndex, query_tokens: list[str], passage_id: int) -> float:
    """Score one passage; duplicate query terms count once (bag of distinct terms)."""
    if not 0 <= passage_id < index.n_docs:
        raise NotFoundError(f"passage {passage_id} not in index (size {index.n_docs})")
    dl = index.doc_len[passage_id]
    norm = index.k1 * (1.0 - index.b + index.b * dl / index.avgdl)
    score = 0.0
    for term in set(query_tokens):
        plist = index.postings.get(term)
        if not plist:
            continue
        pos = bisect_left(plist, (passage_id,))
        if pos == len(plist) or plist[pos][0] != passage_id:
            continue
        tf = plist[pos][1]
        score += _idf(index, term) * tf * (index.k1 + 1.0) / (tf + norm)
    return score


def bm25_search(index: InvertedIndex, query: str, k: int = DEFAULT_TOP_K) -> list[RetrievalHit]:
    """Top-k passages by BM25 score, ties broken by ascending passage_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    tokens = tokenize(query)
    if len(tokens) > MAX_QUERY_TOKENS:
        logger.warning("query truncated from %d to %d tokens", len(tokens), MAX_QUERY_TOKENS)
        tokens = tokens[:MAX_QUERY_TOKENS]
    scores: dict[int, float] = {}
    for term in set(tokens):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = _idf(index, term)
        k1 = index.k1
        coeff = index.k1 * index.b / index.avgdl
        base = index.k1 * (1.0 - index.b)
        for pid, tf in plist:
            contrib = idf * tf * (k1 + 1.0) / (tf + base + coeff * index.doc_len[pid])
            scores[pid] = scores.get(pid, 0.0) + contrib
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    return [
        RetrievalHit(passage_id=pid, score=s,
                     wiki_id=index.doc_meta[pid][0], title=index.doc_meta[pid][1])
        for pid, s in ranked
    ]


# ---------------------------------------------------------------------------
# Persistence

def save_index(index: InvertedIndex, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Qddd", index.n_docs, index.avgdl, index.k1, index.b))
        f.write(struct.pack(f"<{index.n_docs}I", *index.doc_len))
        for wiki_id, title in index.doc_meta:
            _write_str(f, wiki_id)
            _write_str(f, title)
        terms = sorted(index.postings)
        f.write(struct.pack("<Q", len(terms)))
        for term in terms:
            _write_str(f, term)
            plist = index.postings[term]
            f.write(struct.pack("<I", len(plist)))
            flat = [v for pair in plist for v in pair]
            f.write(struct.pack(f"<{len(flat)}I", *flat))


def load_index(path: str | Path) -> InvertedIndex:
    try:
        f = open(path, "rb")
    except OSError as e:
        raise PersistenceError(f"cannot open index file: {e}") from None
    with f:
        magic = f.read(4)
        if magic != MAGIC:
            raise PersistenceError(f"not a BM25 index file: {path}")
        (version,) = struct.unpack("<I", _read(f, 4))
        if version > FORMAT_VERSION:
            raise VersionError(f"BM25 index version {version} is newer than supported")
        n_docs, avgdl, k1, b = struct.unpack("<Qddd", _read(f, 8 + 24))
        doc_len = list(struct.unpack(f"<{n_docs}I", _read(f, 4 * n_docs)))
        doc_meta = [( _read_str(f), _read_str(f)) for _ in range(n_docs)]
        (n_terms,) = struct.unpack("<Q", _read(f, 8))
        postings: dict[str, list[tuple[int, int]]] = {}
        for _ in range(n_terms):
            term = _read_str(f)
            (n_post,) = struct.unpack("<I", _read(f, 4))
            flat = struct.unpack(f"<{2 * n_post}I", _read(f, 8 * n_post))
            postings[term] = [(flat[2 * i], flat[2 * i + 1]) for i in range(n_post)]
    df = {term: len(plist) for term, plist in postings.items()}
    return InvertedIndex(postings=postings, doc_len=doc_len, avgdl=avgdl,
                         n_docs=n_docs, df=df, k1=k1, b=b, doc_meta=doc_meta)


def _write_str(f, s: str) -> None:
    b = s.encode("utf-8")
    f.write(struct.pack("<I", len(b)))
    f.write(b)


def _read(f, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise PersistenceError("truncated BM25 index file")
    return b


def _read_str(f) -> str:
    (n,) = struct.unpack("<I", _read(f, 4))
    return _read(f, n).decode("utf-8")
