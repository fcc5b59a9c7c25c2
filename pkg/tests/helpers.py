"""Independent oracles and shared fixture handles for the test-suite.

Nothing here imports the code under test except for loading fixtures, so the
reference computations stay independent of the implementation.
"""

from __future__ import annotations

import math
import random
import re
from pathlib import Path

import numpy as np

import reflectkg

FIXTURES = Path(reflectkg.__file__).parent / "fixtures"
DESK_KG = FIXTURES / "desk.tsv"
DESK_NAMES = FIXTURES / "desk.names.tsv"
DESK_MOCK = FIXTURES / "desk_mock.json"
DESK_QUESTIONS = FIXTURES / "desk_questions.jsonl"
EARLY_STOP = FIXTURES / "early_stop.jsonl"
MLK_EMBEDDINGS = FIXTURES / "mlk_embeddings.json"
TEST_FIXTURES = Path(__file__).parent / "fixtures"

MLK_QUERY = "what organization did martin luther king lead"
MLK_SAMPLE = (
    "@[Retrieve Relation]@{<paragraph>organization.organization_founder.organizations_founded;"
    "religion.religious_organization.leaders;organization.organization.founders;"
    "organization.organization.leadership;organization.leadership.organization</paragraph>}"
    "organization.organization_founder.organizations_founded+[Fully Relevant]+"
    "religion.religious_organization.leaders+[Partially Relevant]+"
    "organization.organization.founders[Unrelevant]"
    "organization.organization.leadership+[Partially Relevant]+"
    "organization.leadership.organization+[Partially Relevant]+"
    "@[Retrieve Entity]@{<paragraph>(Martin Luther King, Jr., organization.organization_founder.organizations_founded, "
    "Montgomery Improvement Association);(Martin Luther King, Jr., "
    "organization.organization_founder.organizations_founded, Southern Christian Leadership Conference)"
    "</paragraph>}Montgomery Improvement Association+[Fully Relevant]+"
    "Southern Christian Leadership Conference+[Fully Relevant]+=[Partially Reasonable]="
    "@[No Retrieval]@Answer: Southern Christian Leadership Conference;Montgomery Improvement Association"
    "^[Utility:5]^"
)


# -- scoring ---------------------------------------------------------------------

def softmax_oracle(logprobs) -> np.ndarray:
    x = np.asarray(logprobs, dtype=np.float64)
    e = np.exp(x - x.max())
    return e / e.sum()


def graded_oracle(logprobs: dict, full: str, partial: str, weight: float = 0.5) -> float:
    names = list(logprobs)
    p = softmax_oracle([logprobs[n] for n in names])
    probs = dict(zip(names, p))
    return float(probs.get(full, 0.0) + weight * probs.get(partial, 0.0))


def utility_oracle(logprobs: dict, mode: str) -> float:
    names = list(logprobs)
    p = softmax_oracle([logprobs[n] for n in names])
    if mode == "as_written":
        return float(p.sum())
    levels = np.array([int(n.split(":")[1]) for n in names], dtype=np.float64)
    return float((levels * p).sum() / 5.0)


def node_oracle(seq, rel, rat, uti, k1=1.0, k2=0.5) -> float:
    return seq + k1 * rel * rat + k2 * uti


# -- graphs ------------------------------------------------------------------------

def random_triples(rng: random.Random, n_nodes: int, n_edges: int, relations=("r.a", "r.b", "r.c")):
    nodes = [f"n{i}" for i in range(n_nodes)]
    rows = set()
    for _ in range(n_edges):
        s = rng.choice(nodes)
        o = rng.choice(nodes + ["lit:7"]) if rng.random() < 0.1 else rng.choice(nodes)
        if o != s:
            rows.add((s, rng.choice(relations), o))
    return sorted(rows)


def brute_force_paths(rows, topic: str, answer: str, max_depth: int) -> set[tuple[str, ...]]:
    """Every simple walk topic -> answer over the raw rows, as flat string tuples."""
    found = set()

    def walk(path, seen):
        if path[-1] == answer:
            found.add(tuple(path))
            return
        if (len(path) - 1) // 2 == max_depth:
            return
        for s, r, o in rows:
            if s == path[-1] and o not in seen:
                walk(path + [r, o], seen | {o})

    walk([topic], {topic})
    return found


def shortest_oracle(rows, topic, answer, max_depth) -> set[tuple[str, ...]]:
    paths = brute_force_paths(rows, topic, answer, max_depth)
    if not paths:
        return set()
    best = min(len(p) for p in paths)
    return {p for p in paths if len(p) == best}


def flat(path) -> tuple[str, ...]:
    out = [path.topic.id]
    for r, n in path.hops:
        out += [r.dotted, n.key]
    return tuple(out)


# -- retrieval ------------------------------------------------------------------------

def trigram_oracle(a: str, b: str) -> float:
    def grams(s):
        out = set()
        for w in re.findall(r"[a-z0-9]+", s.lower()):
            out |= {w} if len(w) < 3 else {w[i:i + 3] for i in range(len(w) - 2)}
        return out

    ga, gb = grams(a), grams(b)
    if not ga and not gb:
        return float(a == b)
    return len(ga & gb) / len(ga | gb)


# -- metrics --------------------------------------------------------------------------

def set_metrics_oracle(pred, gold) -> tuple[int, float]:
    pred, gold = list(dict.fromkeys(pred)), list(dict.fromkeys(gold))
    tp = sum(1 for x in pred if x in gold)
    hit = 1 if tp > 0 else 0
    if tp == 0:
        return hit, 0.0
    precision = tp / len(pred)
    recall = tp / len(gold)
    return hit, 2.0 / (1.0 / precision + 1.0 / recall)


def random_set_pairs(seed: int, n: int):
    rng = random.Random(seed)
    universe = [f"a{i}" for i in range(8)]
    pairs = []
    for _ in range(n):
        gold = rng.sample(universe, rng.randint(1, 5))
        pred = rng.sample(universe, rng.randint(0, 5))
        pairs.append((pred, gold))
    return pairs


def isclose(a, b, tol) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)


# -- annotated paths ------------------------------------------------------------------

_ITEM_CHARS = "abcdefghijklmnopqrstuvwxyz ABC.,_()-+=:'&é0123456789"


def _random_item(rng: random.Random) -> str:
    while True:
        s = "".join(rng.choice(_ITEM_CHARS) for _ in range(rng.randint(1, 14)))
        if s[0] not in "+=" and s[-1] != "+":
            return s


def random_annotated_path(rng: random.Random):
    """Random grammar-valid segment sequence built from the public segment types."""
    from reflectkg.forge import (AnnotatedPath, AnswerBlock, KnowledgeBlock, RationalityMark, RelevanceMark,
                                 RetrievalMarker)
    from reflectkg.scoring import Rationality, Relevance, Retrieval, Utility

    segs = []
    for _ in range(rng.randint(0, 3)):
        segs.append(RetrievalMarker(Retrieval.RELATION))
        items = [_random_item(rng) for _ in range(rng.randint(1, 5))]
        segs.append(KnowledgeBlock(tuple(items)))
        segs += [RelevanceMark(rng.choice(items), rng.choice(list(Relevance))) for _ in range(rng.randint(0, 5))]
        if rng.random() < 0.8:
            segs.append(RetrievalMarker(Retrieval.ENTITY))
            items = [_random_item(rng) for _ in range(rng.randint(1, 4))]
            segs.append(KnowledgeBlock(tuple(items)))
            segs += [RelevanceMark(it, rng.choice(list(Relevance))) for it in items]
            rat = rng.choice(list(Rationality))
            segs.append(RationalityMark(rat))
            if rat == Rationality.UNREASONABLE:
                break
    answers = tuple(_random_item(rng).replace(";", "") for _ in range(rng.randint(1, 3)))
    segs.append(AnswerBlock(answers, rng.choice(list(Utility))))
    return AnnotatedPath("", tuple(segs))


def skeleton_count_oracle(graph, topic, answers, max_depth) -> int:
    """Distinct shortest-path skeletons (path minus its final node) across all answers."""
    from reflectkg.kg import shortest_paths

    seen = set()
    for a in answers:
        for p in shortest_paths(graph, topic, a, max_depth):
            f = flat(p)
            seen.add(f[:-1])
    return len(seen)
