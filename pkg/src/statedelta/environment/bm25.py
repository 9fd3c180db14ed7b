"""Okapi BM25 over an in-memory corpus.

score(D, Q) = sum over query terms q of
    idf(q) * tf(q, D) * (k1 + 1) / (tf(q, D) + k1 * (1 - b + b * |D| / avgdl))
idf(q) = ln((N - df(q) + 0.5) / (df(q) + 0.5) + 1)
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from statedelta.environment.corpus import Document

_WORD = re.compile(r"\w+")


def analyze(text: str) -> list[str]:
    return _WORD.findall(text.lower())


@dataclass(frozen=True)
class RetrievalIndex:
    docs: tuple[Document, ...]
    postings: dict[str, dict[int, int]]  # term -> {doc index: term frequency}
    doc_lengths: tuple[int, ...]
    avg_length: float
    k1: float = 1.2
    b: float = 0.75

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        n, df = self.n_docs, self.df(term)
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)


def build_index(corpus: Sequence[Document], k1: float = 1.2, b: float = 0.75) -> RetrievalIndex:
    if not corpus:
        raise ValueError("cannot index an empty corpus")
    postings: dict[str, dict[int, int]] = {}
    lengths = []
    for i, doc in enumerate(corpus):
        terms = analyze(f"{doc.title} {doc.text}")
        lengths.append(len(terms))
        for term, tf in Counter(terms).items():
            postings.setdefault(term, {})[i] = tf
    avg = sum(lengths) / len(lengths)
    return RetrievalIndex(tuple(corpus), postings, tuple(lengths), avg, k1, b)


def score_all(index: RetrievalIndex, query: str) -> dict[int, float]:
    scores: dict[int, float] = {}
    k1, b, avg = index.k1, index.b, index.avg_length
    for term in analyze(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for i, tf in plist.items():
            norm = tf + k1 * (1.0 - b + b * index.doc_lengths[i] / avg)
            scores[i] = scores.get(i, 0.0) + idf * tf * (k1 + 1.0) / norm
    return scores


def retrieve(index: RetrievalIndex, query: str, k: int = 6) -> list[tuple[Document, float]]:
    """Top ``k`` documents by descending score; ties go to the smaller doc id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = score_all(index, query)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], index.docs[kv[0]].id))
    return [(index.docs[i], s) for i, s in ranked[:k]]


def shard_docs(ranked: Sequence) -> tuple[list, list]:
    """Ranks 1, 3, 5, ... to the first agent; 2, 4, 6, ... to the second."""
    ranked = list(ranked)
    return ranked[0::2], ranked[1::2]
