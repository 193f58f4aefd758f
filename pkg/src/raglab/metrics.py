"""Answer-quality and retrieval-quality metrics.

All downstream metrics operate on normalized text. Two normalizations are
used:

* :func:`normalize_answer` — the SQuAD-style normalization (lowercase,
  strip punctuation, drop articles, collapse whitespace) behind exact
  match, token F1 and has_answer.
* ROUGE-L keeps articles (lowercase + punctuation strip + whitespace
  collapse only); dropping them would change LCS lengths in ways standard
  ROUGE tooling does not.

Retrieval metrics are page-level: passage hits are collapsed to unique
page ids first (:func:`page_dedup`) and scored against gold provenance
sets. When an instance carries several provenance sets, the score is the
max over sets (credit for fully satisfying any one evidence set).
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = [
    "MetricValue",
    "ProvenanceSet",
    "normalize_answer",
    "exact_match",
    "token_f1",
    "rouge_l",
    "has_answer",
    "page_dedup",
    "r_precision",
    "recall_at_k",
    "kilt_conditioned",
]

_PUNCT = frozenset(string.punctuation)
_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")


@dataclass(frozen=True)
class ProvenanceSet:
    """One gold evidence set: page ids that jointly support an answer."""

    wiki_ids: tuple[str, ...]

    def __post_init__(self):
        if not self.wiki_ids:
            raise ValueError("provenance set must be non-empty")
        if any(not w for w in self.wiki_ids):
            raise ValueError("provenance ids must be non-empty strings")

    @property
    def pages(self) -> frozenset[str]:
        return frozenset(self.wiki_ids)


@dataclass
class MetricValue:
    """An aggregated metric: mean of per-instance values."""

    name: str
    value: float
    per_instance: list[float] = field(default_factory=list)


def normalize_answer(s: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES_RE.sub(" ", s)
    return " ".join(s.split())


def _light_normalize(s: str) -> str:
    # ROUGE-L normalization: like normalize_answer but articles kept.
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    return " ".join(s.split())


def exact_match(pred: str, golds: Sequence[str]) -> float:
    """1.0 iff the prediction matches some gold after normalization.

    The KILT "Accuracy" rows are this same operation applied to
    classification-style answers (labels, entity titles).
    """
    _require_golds(golds)
    p = normalize_answer(pred)
    return 1.0 if any(p == normalize_answer(g) for g in golds) else 0.0


def token_f1(pred: str, golds: Sequence[str]) -> float:
    """Max over golds of token-multiset F1 on normalized whitespace tokens."""
    _require_golds(golds)
    pred_tokens = normalize_answer(pred).split()
    best = 0.0
    for g in golds:
        gold_tokens = normalize_answer(g).split()
        best = max(best, _f1_once(pred_tokens, gold_tokens))
    return best


def _f1_once(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    counts: dict[str, int] = {}
    for t in gold_tokens:
        counts[t] = counts.get(t, 0) + 1
    common = 0
    for t in pred_tokens:
        if counts.get(t, 0) > 0:
            counts[t] -= 1
            common += 1
    if common == 0:
        return 0.0
    precision = common / len(pred_tokens)
    recall = common / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def rouge_l(pred: str, golds: Sequence[str]) -> float:
    """Max over golds of the LCS F-measure (beta=1) on token sequences."""
    _require_golds(golds)
    pred_tokens = _light_normalize(pred).split()
    best = 0.0
    for g in golds:
        gold_tokens = _light_normalize(g).split()
        best = max(best, _rouge_once(pred_tokens, gold_tokens))
    return best


def _rouge_once(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    lcs = _lcs_length(pred_tokens, gold_tokens)
    if lcs == 0:
        return 0.0
    p = lcs / len(pred_tokens)
    r = lcs / len(gold_tokens)
    return 2 * p * r / (p + r)


def _lcs_length(a: list[str], b: list[str]) -> int:
    # Iterative DP on a single rolling row.
    if len(b) < len(a):
        a, b = b, a
    prev = [0] * (len(a) + 1)
    for tb in b:
        cur = [0]
        for j, ta in enumerate(a, start=1):
            if ta == tb:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def has_answer(output: str, golds: Sequence[str]) -> float:
    """1.0 iff some normalized gold occurs at token boundaries in the output.

    A leniency proxy beside exact match: "parisian" does not contain
    "paris" under the token-boundary rule.
    """
    _require_golds(golds)
    out_tokens = normalize_answer(output).split()
    for g in golds:
        gold_tokens = normalize_answer(g).split()
        if _is_sublist(gold_tokens, out_tokens):
            return 1.0
    return 0.0


def _is_sublist(needle: list[str], haystack: list[str]) -> bool:
    if not needle:
        return True
    n = len(needle)
    for i in range(len(haystack) - n + 1):
        if haystack[i:i + n] == needle:
            return True
    return False


def page_dedup(pages: Iterable[str]) -> list[str]:
    """Collapse an ordered page-id stream to first occurrences."""
    seen: set[str] = set()
    out: list[str] = []
    for p in pages:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


def r_precision(retrieved_pages: Sequence[str], provenance: Sequence[ProvenanceSet]) -> float:
    """Max over provenance sets of |set ∩ top-R| / R, R = set size."""
    if not provenance:
        raise ValueError("provenance must be non-empty")
    best = 0.0
    for pset in provenance:
        pages = pset.pages
        r = len(pages)
        top = retrieved_pages[:r]
        hit = sum(1 for p in top if p in pages)
        best = max(best, hit / r)
    return best


def recall_at_k(retrieved_pages: Sequence[str], provenance: Sequence[ProvenanceSet],
                k: int = 5) -> float:
    """Max over provenance sets of the fraction of the set in the top-k."""
    if not provenance:
        raise ValueError("provenance must be non-empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    top = set(retrieved_pages[:k])
    best = 0.0
    for pset in provenance:
        pages = pset.pages
        hit = len(pages & top)
        best = max(best, hit / len(pages))
    return best


def kilt_conditioned(downstream_score: float, rprec: float) -> float:
    """Downstream score credited only when the full evidence set was retrieved first."""
    if not 0.0 <= downstream_score <= 1.0 or not 0.0 <= rprec <= 1.0:
        raise ValueError("scores must lie in [0, 1]")
    return downstream_score if rprec == 1.0 else 0.0


def _require_golds(golds: Sequence[str]) -> None:
    if not golds:
        raise ValueError("golds must be non-empty")
