"""Input coercion for the estimator wrappers."""

from __future__ import annotations

import os
from typing import Any, Iterable

from .bench import QaExample, parse_example
from .kg import KnowledgeGraph, Triple, load_graph, parse_node, RelationRef


def check_graph(X: Any, names=None) -> KnowledgeGraph:
    """Accept a graph, a triple-file path, or an iterable of triples / 3-tuples."""
    if isinstance(X, KnowledgeGraph):
        return X
    if isinstance(X, (str, os.PathLike)):
        return load_graph(X, names)
    if isinstance(X, Iterable):
        triples = []
        for i, t in enumerate(X):
            if isinstance(t, Triple):
                triples.append(t)
                continue
            if len(t) != 3:
                raise ValueError(f"triple {i} has {len(t)} fields, expected 3")
            s, r, o = t
            triples.append(Triple(parse_node(s) if isinstance(s, str) else s,
                                  RelationRef.parse(r) if isinstance(r, str) else r,
                                  parse_node(o) if isinstance(o, str) else o))
        return KnowledgeGraph(triples, names if isinstance(names, dict) else None)
    raise TypeError(f"cannot build a knowledge graph from {type(X).__name__}")


def check_questions(X: Any) -> list[QaExample]:
    """Accept QaExamples, dicts, or ``(question, topics[, answers])`` tuples.

    Answers are optional here; a missing list becomes a placeholder so that
    prediction-only inputs validate.
    """
    if isinstance(X, (str, bytes)) or not isinstance(X, Iterable):
        raise TypeError("expected a sequence of questions")
    out = []
    for i, item in enumerate(X):
        if isinstance(item, QaExample):
            out.append(item)
        elif isinstance(item, dict):
            rec = {"answers": ["?"], **item}
            out.append(parse_example(rec, fallback_id=str(i)))
        elif isinstance(item, (tuple, list)) and len(item) in (2, 3):
            topics = [item[1]] if isinstance(item[1], str) else list(item[1])
            answers = list(item[2]) if len(item) == 3 else ["?"]
            out.append(QaExample(str(i), item[0], tuple(topics), tuple(answers)))
        else:
            raise TypeError(f"question {i}: unsupported type {type(item).__name__}")
    if not out:
        raise ValueError("no questions given")
    return out


def check_positive_int(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value
