"""Weakly supervised training data: shortest graph paths annotated with reflection tokens.

Serialized sample grammar::

    sample  := hop* answer
    hop     := "@[Retrieve Relation]@" kblock relmark*
               ["@[Retrieve Entity]@" kblock relmark* ratmark]
    kblock  := "{<paragraph>" item (";" item)* "</paragraph>}"
    relmark := item ("+[" relevance "]+" | "[Unrelevant]")
    ratmark := "=[" rationality "]="
    answer  := "@[No Retrieval]@Answer: " ans (";" ans)* "^[Utility:" 1-5 "]^"

``[Unrelevant]`` is written bare; the wrapped form and the alternate
retrieval spellings (``[Relation Retrieval]``, ``[Entity Retrieval]``) are
accepted when parsing.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .gateway import Critic, Trail, TransportError
from .kg import EntityRef, KnowledgeGraph, NodeValue, ReasoningPath, UnknownTopicError, shortest_paths
from .retrieval import EmbeddingProvider, LexicalProvider, retrieve_entities, retrieve_relations
from .scoring import DomainError, Rationality, Relevance, Retrieval, Utility, coerce_category, parse_token

log = logging.getLogger(__name__)

CORPUS_SCHEMA = "reflectkg.corpus/v1"
FIELD_SEP = "\x1f"

_REL_MARKERS = ("@[Retrieve Relation]@", "@[Relation Retrieval]@")
_ENT_MARKERS = ("@[Retrieve Entity]@", "@[Entity Retrieval]@")
_NO_MARKER = "@[No Retrieval]@"
_ANSWER_LEAD = "Answer: "
_KB_OPEN, _KB_CLOSE = "{<paragraph>", "</paragraph>}"
_ITEM_FORBIDDEN = set(";[]{}@^\n\r")
_ANSWER_FORBIDDEN = set(";[]^\n\r")


class SerializationError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at byte {offset}")


# -- segments -----------------------------------------------------------------

@dataclass(frozen=True)
class RetrievalMarker:
    kind: Retrieval


@dataclass(frozen=True)
class KnowledgeBlock:
    items: tuple[str, ...]


@dataclass(frozen=True)
class RelevanceMark:
    item: str
    category: Relevance


@dataclass(frozen=True)
class RationalityMark:
    category: Rationality


@dataclass(frozen=True)
class AnswerBlock:
    answers: tuple[str, ...]
    utility: Utility


Segment = Union[RetrievalMarker, KnowledgeBlock, RelevanceMark, RationalityMark, AnswerBlock]


@dataclass(frozen=True)
class AnnotatedPath:
    query: str
    segments: tuple[Segment, ...]

    @property
    def n_hops(self) -> int:
        return sum(1 for s in self.segments if s == RetrievalMarker(Retrieval.RELATION))

    @property
    def answer(self) -> AnswerBlock:
        return self.segments[-1]


@dataclass(frozen=True)
class TrainingSample:
    query: str
    output: str
    question_id: str = ""
    path: str = ""


def _check_item(item: str, forbidden: set, what: str) -> None:
    if not item:
        raise SerializationError(f"empty {what}")
    bad = forbidden.intersection(item)
    if bad:
        raise SerializationError(f"{what} {item!r} contains reserved character(s) {sorted(bad)}")
    if "<paragraph>" in item or "</paragraph>" in item:
        raise SerializationError(f"{what} {item!r} contains a paragraph delimiter")


def validate(path: AnnotatedPath) -> None:
    """Check the segment sequence against the sample grammar."""
    segs = list(path.segments)
    i = 0

    def take(kind):
        nonlocal i
        if i >= len(segs) or not isinstance(segs[i], kind):
            got = type(segs[i]).__name__ if i < len(segs) else "end"
            raise SerializationError(f"segment {i}: expected {kind.__name__}, got {got}")
        i += 1
        return segs[i - 1]

    def marks():
        nonlocal i
        while i < len(segs) and isinstance(segs[i], RelevanceMark):
            _check_item(segs[i].item, _ITEM_FORBIDDEN, "item")
            if segs[i].item[0] in "+=" or segs[i].item[-1] == "+":
                raise SerializationError(f"item {segs[i].item!r} starts or ends with a delimiter")
            i += 1

    def block():
        kb = take(KnowledgeBlock)
        if not kb.items:
            raise SerializationError("empty knowledge block")
        for it in kb.items:
            _check_item(it, _ITEM_FORBIDDEN, "item")

    while i < len(segs) and not isinstance(segs[i], AnswerBlock):
        m = take(RetrievalMarker)
        if m.kind != Retrieval.RELATION:
            raise SerializationError(f"segment {i - 1}: hop must open with relation retrieval")
        block()
        marks()
        if i < len(segs) and segs[i] == RetrievalMarker(Retrieval.ENTITY):
            i += 1
            block()
            marks()
            rat = take(RationalityMark)
            if rat.category == Rationality.UNREASONABLE and not (
                    i < len(segs) and isinstance(segs[i], AnswerBlock)):
                raise SerializationError("an unreasonable path must stop at the answer")
    ans = take(AnswerBlock)
    if i != len(segs):
        raise SerializationError("segments after the answer block")
    if not ans.answers:
        raise SerializationError("answer block needs at least one answer")
    for a in ans.answers:
        _check_item(a, _ANSWER_FORBIDDEN, "answer")


def serialize(path: AnnotatedPath) -> str:
    validate(path)
    out = []
    for s in path.segments:
        if isinstance(s, RetrievalMarker):
            out.append("@[Retrieve Relation]@" if s.kind == Retrieval.RELATION else "@[Retrieve Entity]@")
        elif isinstance(s, KnowledgeBlock):
            out.append(_KB_OPEN + ";".join(s.items) + _KB_CLOSE)
        elif isinstance(s, RelevanceMark):
            if s.category == Relevance.UNRELEVANT:
                out.append(f"{s.item}[{s.category.value}]")
            else:
                out.append(f"{s.item}+[{s.category.value}]+")
        elif isinstance(s, RationalityMark):
            out.append(f"=[{s.category.value}]=")
        else:
            out.append(f"{_NO_MARKER}{_ANSWER_LEAD}{';'.join(s.answers)}^[{s.utility.value}]^")
    return "".join(out)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, message: str, pos: int | None = None):
        pos = self.pos if pos is None else pos
        raise ParseError(message, len(self.text[:pos].encode("utf-8")))

    def peek(self, *options: str) -> str | None:
        for opt in options:
            if self.text.startswith(opt, self.pos):
                return opt
        return None

    def expect(self, *options: str) -> str:
        got = self.peek(*options)
        if got is None:
            self.fail(f"expected {options[0]!r}")
        self.pos += len(got)
        return got

    def until(self, stop: str) -> str:
        j = self.text.find(stop, self.pos)
        if j < 0:
            self.fail(f"unterminated segment, missing {stop!r}")
        chunk = self.text[self.pos:j]
        self.pos = j
        return chunk

    def token(self, family) -> object:
        start = self.pos
        self.expect("[")
        body = self.until("]")
        self.pos += 1
        try:
            return coerce_category(parse_token(body), family)
        except DomainError as exc:
            self.fail(str(exc), start)

    def block(self) -> KnowledgeBlock:
        self.expect(_KB_OPEN)
        start = self.pos
        body = self.until(_KB_CLOSE)
        self.pos += len(_KB_CLOSE)
        items = tuple(body.split(";"))
        if any(not it for it in items):
            self.fail("empty knowledge item", start)
        return KnowledgeBlock(items)

    def marks(self) -> list[RelevanceMark]:
        out = []
        while self.pos < len(self.text) and not self.peek("@", "=["):
            start = self.pos
            j = self.text.find("[", self.pos)
            if j < 0:
                self.fail("relevance mark without token")
            item = self.text[self.pos:j]
            wrapped = item.endswith("+")
            if wrapped:
                item = item[:-1]
            if not item:
                self.fail("relevance mark without item", start)
            self.pos = j
            cat = self.token(Relevance.FULLY.family)
            if wrapped:
                self.expect("+")
            elif cat != Relevance.UNRELEVANT:
                self.fail(f"{cat.surface} must be wrapped in '+'", j)
            out.append(RelevanceMark(item, cat))
        return out

    def parse(self, query: str) -> AnnotatedPath:
        if not self.text:
            self.fail("empty sample")
        segs: list[Segment] = []
        while not self.peek(_NO_MARKER):
            self.expect(*_REL_MARKERS)
            segs.append(RetrievalMarker(Retrieval.RELATION))
            segs.append(self.block())
            segs.extend(self.marks())
            if self.peek(*_ENT_MARKERS):
                self.expect(*_ENT_MARKERS)
                segs.append(RetrievalMarker(Retrieval.ENTITY))
                segs.append(self.block())
                segs.extend(self.marks())
                self.expect("=")
                segs.append(RationalityMark(self.token(Rationality.FULLY.family)))
                self.expect("=")
        self.expect(_NO_MARKER)
        self.expect(_ANSWER_LEAD)
        start = self.pos
        body = self.until("^[")
        answers = tuple(body.split(";"))
        if any(not a for a in answers):
            self.fail("empty answer", start)
        self.expect("^")
        util = self.token(Utility.U1.family)
        self.expect("^")
        if self.pos != len(self.text):
            self.fail("trailing text after answer block")
        path = AnnotatedPath(query, tuple(segs) + (AnswerBlock(answers, util),))
        try:
            validate(path)
        except SerializationError as exc:
            self.fail(str(exc), start)
        return path


def parse(text: str, query: str = "") -> AnnotatedPath:
    return _Parser(text).parse(query)


# -- forging -----------------------------------------------------------------------

@dataclass
class ForgeReport:
    questions: int = 0
    samples: int = 0
    entries: list[dict] = field(default_factory=list)

    def note(self, question_id: str, reason: str, **extra) -> None:
        self.entries.append({"question_id": question_id, "reason": reason, **extra})


def _skeletons(paths: Sequence[ReasoningPath]) -> list[tuple[ReasoningPath, tuple[NodeValue, ...]]]:
    """Group paths that differ only in their final node; keep first-seen order."""
    groups: dict[tuple, list] = {}
    for p in paths:
        key = (p.topic.id,) + tuple((r.dotted, n.key) for r, n in p.hops[:-1]) + (
            (p.hops[-1][0].dotted,) if p.hops else ())
        groups.setdefault(key, [p, []])[1].append(p.end)
    return [(p, tuple(ends)) for p, ends in groups.values()]


def skeleton_count(graph: KnowledgeGraph, topic: EntityRef, answers: Iterable[NodeValue], max_depth: int) -> int:
    paths = []
    for a in answers:
        paths.extend(shortest_paths(graph, topic, a, max_depth))
    return len(_skeletons(paths))


class Forge:
    """Builds annotated samples for one graph with a fixed critic and retriever."""

    def __init__(self, graph: KnowledgeGraph, critic: Critic, top_k: int = 5, max_path_depth: int = 4,
                 provider: EmbeddingProvider | None = None):
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        self.graph = graph
        self.critic = critic
        self.top_k = top_k
        self.max_path_depth = max_path_depth
        self.provider = provider or LexicalProvider()

    def _label(self, node: NodeValue) -> str:
        return self.graph.label(node)

    def annotate(self, query: str, path: ReasoningPath, ends: Sequence[NodeValue],
                 answers: Sequence[NodeValue]) -> AnnotatedPath:
        segs: list[Segment] = []
        trail = Trail(path.topic)
        prev: NodeValue = path.topic
        for d, (rel, node) in enumerate(path.hops, start=1):
            history = serialize_partial(segs)
            last = d == path.depth
            segs.append(RetrievalMarker(Retrieval.RELATION))
            found = retrieve_relations(query, prev, [rel.dotted], self.graph, self.top_k, self.provider)
            cands = [r.candidate for r in found]
            if rel not in cands:
                cands = [rel] + cands[: self.top_k - 1]
            items = [c.dotted for c in cands]
            segs.append(KnowledgeBlock(tuple(items)))
            for item, v in zip(items, self.critic.critic_relevance(query, history, items, "relation")):
                segs.append(RelevanceMark(item, coerce_category(v.token, Relevance.FULLY.family)))

            tails = retrieve_entities(self.graph, prev, rel)
            segs.append(RetrievalMarker(Retrieval.ENTITY))
            segs.append(KnowledgeBlock(tuple(
                f"({self._label(prev)}, {rel.dotted}, {self._label(t)})" for t in tails)))
            names = [self._label(t) for t in tails]
            for name, v in zip(names, self.critic.critic_relevance(query, history, names, "entity")):
                segs.append(RelevanceMark(name, coerce_category(v.token, Relevance.FULLY.family)))
            trail = trail.extend(rel, ends if last else (node,))
            rat = coerce_category(self.critic.critic_rationality(query, trail).token, Rationality.FULLY.family)
            segs.append(RationalityMark(rat))
            if rat == Rationality.UNREASONABLE:
                break
            prev = node
        labels = [self._label(a) for a in answers]
        util = coerce_category(self.critic.critic_utility(query, labels).token, Utility.U1.family)
        segs.append(AnswerBlock(tuple(labels), util))
        return AnnotatedPath(query, tuple(segs))

    def forge(self, query: str, topic: EntityRef | str, answers: Sequence[NodeValue | str],
              question_id: str = "", report: ForgeReport | None = None) -> list[TrainingSample]:
        report = report if report is not None else ForgeReport()
        report.questions += 1
        if not answers:
            raise ValueError("answers must be non-empty")
        topic = self.graph.entity(topic.id if isinstance(topic, EntityRef) else topic)
        answers = [self._node(a) for a in answers]
        paths: list[ReasoningPath] = []
        try:
            for a in answers:
                found = shortest_paths(self.graph, topic, a, self.max_path_depth)
                if not found:
                    report.note(question_id, "no path within depth bound", answer=a.key)
                paths.extend(found)
        except UnknownTopicError as exc:
            report.note(question_id, str(exc))
            return []
        if not paths:
            report.note(question_id, "sample skipped: no path")
            return []
        samples = []
        for path, ends in _skeletons(paths):
            try:
                text = serialize(self.annotate(query, path, ends, answers))
            except TransportError as exc:
                report.note(question_id, f"critic failure: {exc}", path=path.serialize())
                continue
            except SerializationError as exc:
                report.note(question_id, f"unserializable sample: {exc}", path=path.serialize())
                continue
            samples.append(TrainingSample(query, text, question_id, path.serialize()))
        report.samples += len(samples)
        return samples

    def _node(self, a) -> NodeValue:
        if isinstance(a, (EntityRef,)) or hasattr(a, "key"):
            return self.graph.resolve(a)
        from .kg import parse_node
        return self.graph.resolve(parse_node(a))


def serialize_partial(segs: Sequence[Segment]) -> str:
    """Render hops written so far (no answer block) as critic history."""
    if not segs:
        return ""
    probe = AnnotatedPath("", tuple(segs) + (AnswerBlock(("?",), Utility.U1),))
    try:
        text = serialize(probe)
    except SerializationError:
        return ""
    return text[: text.rfind(_NO_MARKER)]


def forge_sample(query: str, topic, answers, graph: KnowledgeGraph, critic: Critic, top_k: int = 5,
                 provider: EmbeddingProvider | None = None, max_path_depth: int = 4,
                 report: ForgeReport | None = None) -> list[TrainingSample]:
    return Forge(graph, critic, top_k, max_path_depth, provider).forge(query, topic, answers, report=report)


def forge_corpus(forge: Forge, examples: Sequence, workers: int = 1) -> tuple[list[TrainingSample], ForgeReport]:
    """Forge every example; output order follows the input order."""
    report = ForgeReport()

    def one(ex):
        local = ForgeReport()
        out = []
        for topic in ex.topics:
            out.extend(forge.forge(ex.question, topic, list(ex.answers), ex.id, local))
        return out, local

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, examples))
    else:
        results = [one(ex) for ex in examples]
    samples = []
    for out, local in results:
        samples.extend(out)
        report.questions += 1
        report.samples += local.samples
        report.entries.extend(local.entries)
    return samples, report


def write_corpus(samples: Sequence[TrainingSample], path: str | os.PathLike, config: dict | None = None,
                 report: ForgeReport | None = None) -> str:
    """Write one ``query<US>output`` record per line plus a JSON manifest; returns the manifest path."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            if FIELD_SEP in s.query or "\n" in s.query or FIELD_SEP in s.output or "\n" in s.output:
                raise SerializationError("record contains a field or record separator")
            fh.write(f"{s.query}{FIELD_SEP}{s.output}\n")
    manifest = os.fspath(path) + ".manifest.json"
    data = {"schema": CORPUS_SCHEMA, "samples": len(samples), "config": config or {}}
    if report is not None:
        data.update(questions=report.questions, skipped=report.entries)
    with open(manifest, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
    return manifest


def read_corpus(path: str | os.PathLike) -> list[TrainingSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            query, output = line.rstrip("\n").split(FIELD_SEP)
            out.append(TrainingSample(query, output))
    return out
