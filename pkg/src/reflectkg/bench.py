"""Question datasets, answer matching, Hit@1 / F1 and batch evaluation.

Dataset files are JSON Lines, one question per line::

    {"id": "q1", "question": "what is the capital of france",
     "topics": ["m.0f8l9c"], "answers": ["m.05qtj"]}

Gold answers may be graph ids (``m.05qtj``, ``lit:8848``) or plain labels.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .engine import BeamConfig, NoAnswerError, answer_question
from .gateway import Gateway
from .kg import GraphError, KnowledgeGraph, NodeValue, node_key
from .retrieval import EmbeddingProvider


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class QaExample:
    id: str
    question: str
    topics: tuple[str, ...]
    answers: tuple[str, ...]

    def __post_init__(self):
        if not self.question.strip():
            raise DatasetError(f"{self.id}: empty question")
        if not self.topics:
            raise DatasetError(f"{self.id}: no topic entities")
        if not self.answers:
            raise DatasetError(f"{self.id}: no gold answers")


def parse_example(record: dict, fallback_id: str = "") -> QaExample:
    try:
        topics = record["topics"]
        answers = record["answers"]
        question = record["question"]
    except KeyError as exc:
        raise DatasetError(f"missing field {exc.args[0]!r}") from None
    if isinstance(topics, str):
        topics = [topics]
    if not isinstance(answers, list) or not all(isinstance(a, str) for a in answers):
        raise DatasetError("answers must be a list of strings")
    return QaExample(str(record.get("id", fallback_id)), question, tuple(topics), tuple(answers))


def load_dataset(source: str | os.PathLike | Iterable[str]) -> list[QaExample]:
    lines = open(source, encoding="utf-8") if isinstance(source, (str, os.PathLike)) else iter(source)
    out = []
    try:
        for n, line in enumerate(lines, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                out.append(parse_example(json.loads(line), fallback_id=f"line{n}"))
            except (json.JSONDecodeError, DatasetError) as exc:
                raise DatasetError(f"line {n}: {exc}") from None
    finally:
        if hasattr(lines, "close"):
            lines.close()
    ids = [ex.id for ex in out]
    if len(set(ids)) != len(ids):
        raise DatasetError("duplicate question ids")
    return out


# -- metrics --------------------------------------------------------------------------

def hit_at_1(predicted: Iterable, gold: Iterable) -> int:
    """1 when the rank-1 answer set shares any element with the gold set."""
    gold = set(gold)
    if not gold:
        raise ValueError("gold set must be non-empty")
    return int(bool(set(predicted) & gold))


def f1(predicted: Iterable, gold: Iterable) -> float:
    gold, predicted = set(gold), set(predicted)
    if not gold:
        raise ValueError("gold set must be non-empty")
    common = len(predicted & gold)
    if not predicted or not common:
        return 0.0
    p, r = common / len(predicted), common / len(gold)
    return 2 * p * r / (p + r)


def normalize_answers(predicted: Sequence[NodeValue], gold: Sequence[str],
                      graph: KnowledgeGraph) -> tuple[set[str], set[str]]:
    """Map predictions and gold answers into one comparable string space.

    Gold items that are graph ids (or literal keys) match by id; anything
    else matches by case-insensitive label.
    """
    gold_ids, gold_labels = set(), set()
    for g in gold:
        if g.startswith("lit:") or graph.has_entity(g):
            gold_ids.add(g)
        else:
            gold_labels.add("label:" + g.strip().casefold())
    pred = set()
    for node in predicted:
        label = "label:" + graph.label(node).strip().casefold()
        if node_key(node) in gold_ids:
            pred.add(node_key(node))
        elif label in gold_labels:
            pred.add(label)
        else:
            pred.add(node_key(node))
    return pred, gold_ids | gold_labels


@dataclass
class MetricsReport:
    hit_at_1: float
    f1: float
    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows: list[dict], config: dict | None = None) -> "MetricsReport":
        if not rows:
            raise DatasetError("no examples")
        hit = math.fsum(r["hit_at_1"] for r in rows) / len(rows)
        f = math.fsum(r["f1"] for r in rows) / len(rows)
        return cls(hit, f, rows, config or {})

    def to_json(self) -> dict:
        return {"hit_at_1": self.hit_at_1, "f1": self.f1, "n": len(self.rows),
                "config": self.config, "rows": self.rows}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False)


def config_echo(cfg: BeamConfig) -> dict:
    """Config fields that affect results; the worker count is left out on purpose."""
    data = asdict(cfg)
    data.pop("workers")
    return data


def evaluate_example(ex: QaExample, graph: KnowledgeGraph, cfg: BeamConfig, gateway: Gateway,
                     provider: EmbeddingProvider | None = None) -> dict:
    row = {"id": ex.id, "question": ex.question, "gold": sorted(ex.answers), "predicted": [],
           "score": None, "hit_at_1": 0, "f1": 0.0, "error": None, "depth_forced": False}
    try:
        trees, ranked = answer_question(ex.question, ex.topics, graph, cfg, gateway, provider)
    except NoAnswerError as exc:
        trees, ranked = exc.trees, []
        row["error"] = f"NoAnswerError: {exc}"
    except GraphError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    failures = [t.failure for t in trees if t.failure]
    if failures:
        row["error"] = f"TransportError: {failures[0]}"
        return row
    if not ranked:
        return row
    best = ranked[0]
    pred, gold = normalize_answers(best.answers, ex.answers, graph)
    row.update(predicted=sorted(node_key(a) for a in best.answers), score=best.score,
               hit_at_1=hit_at_1(pred, gold), f1=f1(pred, gold), depth_forced=best.depth_forced)
    return row


def run_eval(dataset: Sequence[QaExample], graph: KnowledgeGraph, cfg: BeamConfig | None = None,
             gateway: Gateway | None = None, provider: EmbeddingProvider | None = None,
             workers: int = 1) -> MetricsReport:
    """Answer every question and aggregate metrics; rows keep dataset order."""
    if not dataset:
        raise DatasetError("no examples")
    cfg = cfg or BeamConfig()

    def one(ex):
        return evaluate_example(ex, graph, cfg, gateway, provider)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, dataset))
    else:
        rows = [one(ex) for ex in dataset]
    return MetricsReport.from_rows(rows, config_echo(cfg))
