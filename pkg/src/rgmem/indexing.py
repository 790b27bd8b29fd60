"""Lexical (BM25) and exact cosine indexes over facts, conclusions and graph nodes."""

from __future__ import annotations

import math
from collections import Counter
from typing import Optional

import numpy as np

from rgmem.errors import DimensionMismatch, DuplicateDoc, UnknownDoc, ValidationError
from rgmem.store import EpisodicUnit, GraphNode, MemoryStore
from rgmem.text import tokenize

FACTS = "facts"
CONCLUSIONS = "conclusions"
CORPORA = (FACTS, CONCLUSIONS)


class Bm25Index:
    """Inverted index with Okapi BM25 scoring.

    IDF is ``ln(1 + (N - n + 0.5) / (n + 0.5))`` floored at zero; term frequency
    saturates with ``k1`` and is length-normalised with ``b``.
    """

    def __init__(self, k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b
        self.postings: dict[str, dict[str, int]] = {}
        self.doc_lengths: dict[str, int] = {}
        self._total_length = 0

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    @property
    def avg_doc_length(self) -> float:
        return self._total_length / self.doc_count if self.doc_lengths else 0.0

    def add(self, doc_id: str, text: str) -> None:
        if doc_id in self.doc_lengths:
            raise DuplicateDoc(doc_id)
        tokens = tokenize(text)
        self.doc_lengths[doc_id] = len(tokens)
        self._total_length += len(tokens)
        for term, tf in Counter(tokens).items():
            self.postings.setdefault(term, {})[doc_id] = tf

    def remove(self, doc_id: str) -> None:
        if doc_id not in self.doc_lengths:
            raise UnknownDoc(doc_id)
        self._total_length -= self.doc_lengths.pop(doc_id)
        for term in list(self.postings):
            docs = self.postings[term]
            if docs.pop(doc_id, None) is not None and not docs:
                del self.postings[term]

    def idf(self, term: str) -> float:
        n = len(self.postings.get(term, ()))
        n_docs = self.doc_count
        return max(0.0, math.log(1.0 + (n_docs - n + 0.5) / (n + 0.5)))

    def search(self, query: str, k: int) -> list[tuple[str, float]]:
        if k < 1:
            raise ValidationError("k must be >= 1")
        scores: dict[str, float] = {}
        avgdl = self.avg_doc_length
        for term in dict.fromkeys(tokenize(query)):
            docs = self.postings.get(term)
            if not docs:
                continue
            idf = self.idf(term)
            for doc_id, tf in docs.items():
                norm = 1.0 - self.b + self.b * self.doc_lengths[doc_id] / avgdl
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
        ranked = sorted(((d, s) for d, s in scores.items() if s > 0.0), key=lambda x: (-x[1], x[0]))
        return ranked[:k]


class VectorIndex:
    """Exhaustive cosine search over unit-norm vectors."""

    def __init__(self, dimension: int):
        self.dimension = dimension
        self.entries: dict[str, np.ndarray] = {}

    def _check(self, vector) -> np.ndarray:
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != (self.dimension,):
            raise DimensionMismatch(f"expected dimension {self.dimension}, got {v.shape}")
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-6:
            raise ValidationError("vectors must be unit-norm")
        return v

    def add(self, entry_id: str, vector) -> None:
        self.entries[entry_id] = self._check(vector)

    def remove(self, entry_id: str) -> None:
        if self.entries.pop(entry_id, None) is None:
            raise UnknownDoc(entry_id)

    def topk(self, query_vector, k: int, min_cos: float = -1.0) -> list[tuple[str, float]]:
        if k < 1:
            raise ValidationError("k must be >= 1")
        if not -1.0 <= min_cos <= 1.0:
            raise ValidationError("min_cos must lie in [-1, 1]")
        q = self._check(query_vector)
        if not self.entries:
            return []
        ids = list(self.entries)
        sims = np.stack([self.entries[i] for i in ids]) @ q
        hits = [(i, float(s)) for i, s in zip(ids, sims) if s >= min_cos]
        hits.sort(key=lambda x: (-x[1], x[0]))
        return hits[:k]


class MemoryIndexes:
    """The facts/conclusions BM25 pair plus the entity-node vector index for one store."""

    def __init__(self, dimension: int = 64, k1: float = 1.2, b: float = 0.75):
        self.k1, self.b = k1, b
        self.bm25 = {FACTS: Bm25Index(k1, b), CONCLUSIONS: Bm25Index(k1, b)}
        self.vectors = VectorIndex(dimension)
        self.store: Optional[MemoryStore] = None

    # -- wiring --------------------------------------------------------------
    def attach(self, store: MemoryStore) -> "MemoryIndexes":
        self.store = store
        store.unit_listeners.append(self._on_unit)
        store.node_listeners.append(self._on_node)
        return self

    def _on_unit(self, unit: EpisodicUnit) -> None:
        self.bm25[FACTS].add(unit.id, unit.lambda_fact)
        for c in unit.conclusions:
            self.bm25[CONCLUSIONS].add(c.id, c.text)

    def _on_node(self, node: GraphNode) -> None:
        if node.embedding is not None and len(node.embedding) == self.vectors.dimension:
            self.vectors.add(node.id, node.embedding)

    # -- operations --------------------------------------------------------------
    def index_document(self, doc_id: str, text: str, corpus: str) -> None:
        self._corpus(corpus).add(doc_id, text)

    def remove_document(self, doc_id: str, corpus: str) -> None:
        self._corpus(corpus).remove(doc_id)

    def bm25_search(self, query: str, corpus: str, k: int) -> list[tuple[str, float]]:
        return self._corpus(corpus).search(query, k)

    def vector_topk(self, query_vector, k: int, min_cos: float) -> list[tuple[str, float]]:
        return self.vectors.topk(query_vector, k, min_cos)

    def _corpus(self, corpus: str) -> Bm25Index:
        try:
            return self.bm25[corpus]
        except KeyError:
            raise ValidationError(f"unknown corpus {corpus!r}") from None

    def reindex_all(self, store: Optional[MemoryStore] = None) -> None:
        store = store or self.store
        self.bm25 = {FACTS: Bm25Index(self.k1, self.b), CONCLUSIONS: Bm25Index(self.k1, self.b)}
        self.vectors = VectorIndex(self.vectors.dimension)
        for unit in sorted(store.units.values(), key=lambda u: u.created_at):
            self._on_unit(unit)
        for node in store.nodes.values():
            self._on_node(node)

    def fingerprint(self) -> tuple:
        """Comparable summary of index contents (used to check reindex equality)."""
        return (
            {c: (dict(ix.doc_lengths), {t: dict(p) for t, p in ix.postings.items()}) for c, ix in self.bm25.items()},
            {i: tuple(v.tolist()) for i, v in self.vectors.entries.items()},
        )
