"""Candidate relation ranking and tail-entity fetching for one reasoning hop."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .kg import KnowledgeGraph, NodeValue, RelationRef, node_key

_WORD_SPLIT = re.compile(r"[^0-9a-z]+")


def trigrams(text: str) -> frozenset[str]:
    """Character trigrams of each word; words shorter than three characters count whole."""
    grams: set[str] = set()
    for word in _WORD_SPLIT.split(text.lower()):
        if not word:
            continue
        if len(word) < 3:
            grams.add(word)
        else:
            grams.update(word[i:i + 3] for i in range(len(word) - 2))
    return frozenset(grams)


def lexical_similarity(a: str, b: str) -> float:
    """Jaccard overlap of character trigrams, after splitting on dots, underscores and spaces."""
    ga, gb = trigrams(a), trigrams(b)
    if not ga and not gb:
        return 1.0 if a == b else 0.0
    return len(ga & gb) / len(ga | gb)


class EmbeddingProvider(Protocol):
    def similarity(self, a: str, b: str) -> float: ...


class LexicalProvider:
    """Deterministic default provider; needs no model weights."""

    name = "lexical"

    def similarity(self, a: str, b: str) -> float:
        return lexical_similarity(a, b)


class VectorProvider:
    """Cosine similarity over vectors from :meth:`embed`; subclasses supply the vectors."""

    dimensionality: int = 0

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def similarity(self, a: str, b: str) -> float:
        va, vb = self.embed(a), self.embed(b)
        na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return float(np.dot(va, vb) / (na * nb))


class StaticEmbeddingProvider(VectorProvider):
    """Vectors looked up from a precomputed table (e.g. cached embedder output)."""

    name = "static"

    def __init__(self, vectors: Mapping[str, Sequence[float]]):
        self._vectors = {k: np.asarray(v, dtype=float) for k, v in vectors.items()}
        dims = {v.shape for v in self._vectors.values()}
        if len(dims) > 1:
            raise ValueError(f"inconsistent vector shapes: {sorted(dims)}")
        self.dimensionality = next(iter(dims))[0] if dims else 0

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "StaticEmbeddingProvider":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh)["vectors"])

    def embed(self, text: str) -> np.ndarray:
        try:
            return self._vectors[text]
        except KeyError:
            raise KeyError(f"no cached embedding for {text!r}") from None


class RemoteEmbeddingProvider(VectorProvider):
    """Embedding endpoint speaking ``{"input": text}`` -> ``{"embedding": [...]}``."""

    name = "remote"

    def __init__(self, endpoint: str, client=None, api_key: str | None = None):
        import httpx

        self.endpoint = endpoint
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=30.0, headers=headers)
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        if text not in self._cache:
            resp = self._client.post(self.endpoint, json={"input": text})
            resp.raise_for_status()
            vec = np.asarray(resp.json()["embedding"], dtype=float)
            if self.dimensionality and vec.shape[0] != self.dimensionality:
                raise ValueError("embedding dimensionality changed between calls")
            self.dimensionality = vec.shape[0]
            self._cache[text] = vec
        return self._cache[text]


@dataclass(frozen=True)
class RetrievalResult:
    candidate: RelationRef
    score: float
    provenance: str  # "query-match" | "hypothesis-match"


def _hypo_text(h) -> str:
    return getattr(h, "surface", h)


def retrieve_relations(query: str, entity: NodeValue, hypotheses: Iterable, graph: KnowledgeGraph,
                       top_k: int = 5, provider: EmbeddingProvider | None = None) -> list[RetrievalResult]:
    """Top-K outgoing relations of ``entity`` scored against the query and hypotheses.

    A candidate's score is the best of its similarity to the query and to any
    hypothesis, so a hypothesis that names the relation exactly dominates.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    provider = provider or LexicalProvider()
    hypos = [_hypo_text(h) for h in hypotheses]
    results = []
    for rel in graph.out_relations(entity):
        text = rel.dotted
        q = provider.similarity(text, query)
        h = max((provider.similarity(text, hy) for hy in hypos), default=float("-inf"))
        if h > q:
            results.append(RetrievalResult(rel, h, "hypothesis-match"))
        else:
            results.append(RetrievalResult(rel, q, "query-match"))
    results.sort(key=lambda r: (-r.score, r.candidate.dotted))
    return results[:top_k]


def retrieve_entities(graph: KnowledgeGraph, entity: NodeValue, relation: RelationRef) -> list[NodeValue]:
    return sorted(graph.tail_entities(entity, relation), key=node_key)

