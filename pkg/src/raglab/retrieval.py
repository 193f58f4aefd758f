"""Shared retrieval types: scored hits and the retriever interface."""

from __future__ import annotations

from typing import NamedTuple, Protocol, runtime_checkable

from .corpus import Passage


class RetrievalHit(NamedTuple):
    """A scored (passage, page) search result."""

    passage_id: int
    score: float
    wiki_id: str = ""
    title: str = ""


@runtime_checkable
class Retriever(Protocol):
    """What the chain engine needs from any retriever."""

    def search(self, query: str, k: int) -> list[RetrievalHit]: ...

    def passage(self, passage_id: int) -> Passage: ...
