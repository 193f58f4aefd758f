"""Concrete retrievers the chain engine can reference by id."""

from __future__ import annotations

from .bm25 import DEFAULT_TOP_K, InvertedIndex, bm25_search
from .corpus import Corpus, Passage, get_passage
from .embeddings import EmbeddingGateway
from .retrieval import RetrievalHit


class SparseRetriever:
    """BM25 index + corpus behind the common retriever interface."""

    kind = "bm25"

    def __init__(self, index: InvertedIndex, corpus: Corpus):
        self.index = index
        self.corpus = corpus

    def search(self, query: str, k: int = DEFAULT_TOP_K) -> list[RetrievalHit]:
        return bm25_search(self.index, query, k)

    def passage(self, passage_id: int) -> Passage:
        return get_passage(self.corpus, passage_id)


class DenseRetriever:
    """Embedding gateway + vector index + corpus metadata."""

    def __init__(self, index, gateway: EmbeddingGateway, corpus: Corpus):
        self.index = index
        self.gateway = gateway
        self.corpus = corpus

    @property
    def kind(self) -> str:
        return self.index.kind

    def search(self, query: str, k: int = DEFAULT_TOP_K) -> list[RetrievalHit]:
        vector = self.gateway.embed_query(query)
        hits = self.index.search(vector, k)
        out = []
        for hit in hits:
            p = get_passage(self.corpus, hit.passage_id)
            out.append(hit._replace(wiki_id=p.wiki_id, title=p.title))
        return out

    def passage(self, passage_id: int) -> Passage:
        return get_passage(self.corpus, passage_id)
