"""Independent brute-force oracles for the metric suite.

These are deliberately written on different code paths than the package
implementations (loops instead of regexes, recursion instead of DP,
string containment instead of sublist scan) so that agreement between the
two is meaningful.
"""

from __future__ import annotations

import string
from functools import lru_cache


def o_normalize(s: str) -> str:
    out_chars = []
    for ch in s.lower():
        if ch in string.punctuation:
            continue
        out_chars.append(ch)
    tokens = []
    for tok in "".join(out_chars).split():
        if tok in ("a", "an", "the"):
            continue
        tokens.append(tok)
    return " ".join(tokens)


def o_light_normalize(s: str) -> str:
    out_chars = []
    for ch in s.lower():
        if ch in string.punctuation:
            continue
        out_chars.append(ch)
    return " ".join("".join(out_chars).split())


def o_exact_match(pred: str, golds) -> float:
    for g in golds:
        if o_normalize(pred) == o_normalize(g):
            return 1.0
    return 0.0


def o_token_f1(pred: str, golds) -> float:
    scores = []
    for g in golds:
        pt = o_normalize(pred).split()
        gt = o_normalize(g).split()
        if len(pt) == 0 and len(gt) == 0:
            scores.append(1.0)
            continue
        if len(pt) == 0 or len(gt) == 0:
            scores.append(0.0)
            continue
        common = 0
        for tok in set(pt) | set(gt):
            common += min(pt.count(tok), gt.count(tok))
        if common == 0:
            scores.append(0.0)
            continue
        p = common / len(pt)
        r = common / len(gt)
        scores.append(2 * p * r / (p + r))
    return max(scores)


def o_rouge_l(pred: str, golds) -> float:
    scores = []
    for g in golds:
        pt = tuple(o_light_normalize(pred).split())
        gt = tuple(o_light_normalize(g).split())
        if len(pt) == 0 and len(gt) == 0:
            scores.append(1.0)
            continue
        if len(pt) == 0 or len(gt) == 0:
            scores.append(0.0)
            continue
        lcs = _lcs_recursive(pt, gt)
        if lcs == 0:
            scores.append(0.0)
            continue
        p = lcs / len(pt)
        r = lcs / len(gt)
        scores.append(2 * p * r / (p + r))
    return max(scores)


@lru_cache(maxsize=None)
def _lcs_recursive(a: tuple, b: tuple) -> int:
    if not a or not b:
        return 0
    if a[-1] == b[-1]:
        return _lcs_recursive(a[:-1], b[:-1]) + 1
    return max(_lcs_recursive(a[:-1], b), _lcs_recursive(a, b[:-1]))


def o_has_answer(output: str, golds) -> float:
    out = " " + o_normalize(output) + " "
    for g in golds:
        needle = o_normalize(g)
        if needle == "":
            return 1.0
        if " " + needle + " " in out:
            return 1.0
    return 0.0


def o_page_dedup(pages) -> list:
    out = []
    for p in pages:
        if p not in out:
            out.append(p)
    return out


def o_r_precision(retrieved, provenance_sets) -> float:
    best = 0.0
    for pset in provenance_sets:
        pages = []
        for p in pset:
            if p not in pages:
                pages.append(p)
        r = len(pages)
        hits = 0
        for p in pages:
            if p in retrieved[:r]:
                hits += 1
        best = max(best, hits / r)
    return best


def o_recall_at_k(retrieved, provenance_sets, k=5) -> float:
    best = 0.0
    for pset in provenance_sets:
        pages = []
        for p in pset:
            if p not in pages:
                pages.append(p)
        hits = 0
        for p in pages:
            if p in retrieved[:k]:
                hits += 1
        best = max(best, hits / len(pages))
    return best


def o_kilt_conditioned(downstream: float, rprec: float) -> float:
    if rprec == 1.0:
        return downstream
    return 0.0


# ---------------------------------------------------------------------------
# BM25: exhaustive score-then-sort oracle over raw token lists


def o_bm25_scores(docs, query_tokens, k1, b):
    import math

    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n
    out = []
    for tokens in docs:
        score = 0.0
        for term in set(query_tokens):
            tf = tokens.count(term)
            if tf == 0:
                continue
            df = sum(1 for d in docs if term in d)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(tokens) / avgdl))
        out.append(score)
    return out


def o_bm25_topk(docs, query_tokens, k, k1=0.9, b=0.4):
    scores = o_bm25_scores(docs, query_tokens, k1, b)
    ranked = sorted(range(len(docs)), key=lambda i: (-scores[i], i))
    ranked = [i for i in ranked if scores[i] > 0.0]
    return ranked[:k], scores
