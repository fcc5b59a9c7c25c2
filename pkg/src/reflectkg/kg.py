"""Triple store, name table and path extraction over a knowledge graph.

Entities are identified by opaque machine ids (Freebase MIDs in practice);
friendly names are display-only and never take part in identity.  Relations
are hierarchical dotted names such as ``location.country.languages_spoken``.
"""

from __future__ import annotations

import os
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

LITERAL_PREFIX = "lit:"


class GraphError(Exception):
    """Base class for knowledge-graph errors."""


class GraphLoadError(GraphError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class UnknownTopicError(GraphError):
    """Raised when a topic entity does not occur in the graph."""

    def __init__(self, entity_id: str):
        self.entity_id = entity_id
        super().__init__(f"unknown topic entity: {entity_id!r}")


@dataclass(frozen=True, order=True)
class EntityRef:
    id: str
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.id or self.id != self.id.strip():
            raise ValueError(f"invalid entity id {self.id!r}")

    @property
    def label(self) -> str:
        return self.name if self.name else self.id

    @property
    def key(self) -> str:
        return self.id

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True, order=True)
class Literal:
    value: str
    kind: str = "string"

    @property
    def label(self) -> str:
        return self.value

    @property
    def key(self) -> str:
        return LITERAL_PREFIX + self.value

    def __str__(self) -> str:
        return self.key


NodeValue = Union[EntityRef, Literal]


@dataclass(frozen=True, order=True)
class RelationRef:
    path: tuple[str, ...]

    def __post_init__(self):
        if not self.path:
            raise ValueError("relation needs at least one segment")
        for seg in self.path:
            if not seg or "." in seg or any(c.isspace() for c in seg):
                raise ValueError(f"invalid relation segment {seg!r}")

    @classmethod
    def parse(cls, text: str) -> "RelationRef":
        return cls(tuple(text.split(".")))

    @property
    def dotted(self) -> str:
        return ".".join(self.path)

    @property
    def leaf(self) -> str:
        return self.path[-1]

    def __str__(self) -> str:
        return self.dotted


@dataclass(frozen=True)
class Triple:
    subject: EntityRef
    relation: RelationRef
    object: NodeValue

    def render(self) -> str:
        return f"{self.subject.id}\t{self.relation.dotted}\t{self.object.key}"


def node_key(node: NodeValue) -> str:
    return node.key


def parse_node(text: str) -> NodeValue:
    if text.startswith(LITERAL_PREFIX):
        return Literal(text[len(LITERAL_PREFIX):])
    return EntityRef(text)


class KnowledgeGraph:
    """Immutable, indexed set of triples plus an id -> label table.

    Lookups never mutate; once built the graph is safe to share between
    threads.
    """

    def __init__(self, triples: Iterable[Triple] = (), names: Mapping[str, str] | None = None):
        self._names: dict[str, str] = dict(names or {})
        forward: dict[str, dict[RelationRef, set[NodeValue]]] = defaultdict(lambda: defaultdict(set))
        stored: set[tuple[str, RelationRef, str]] = set()
        entity_ids: set[str] = set()
        for t in triples:
            k = (t.subject.id, t.relation, t.object.key)
            if k in stored:
                continue
            stored.add(k)
            forward[t.subject.id][t.relation].add(self._plain(t.object))
            entity_ids.add(t.subject.id)
            if isinstance(t.object, EntityRef):
                entity_ids.add(t.object.id)
        self._forward = {s: {r: frozenset(o) for r, o in rels.items()} for s, rels in forward.items()}
        self._keys = frozenset(stored)
        self._entity_ids = frozenset(entity_ids)

    @staticmethod
    def _plain(node: NodeValue) -> NodeValue:
        return EntityRef(node.id) if isinstance(node, EntityRef) else node

    # -- identity -----------------------------------------------------------
    def __len__(self) -> int:
        return len(self._keys)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self._keys == other._keys and self._names == other._names

    def __hash__(self):
        return hash(self._keys)

    def __repr__(self) -> str:
        return f"KnowledgeGraph(triples={len(self)}, entities={self.n_entities})"

    @property
    def n_entities(self) -> int:
        return len(self._entity_ids)

    @property
    def names(self) -> Mapping[str, str]:
        return dict(self._names)

    def triples(self) -> Iterator[Triple]:
        for s in sorted(self._forward):
            subj = self.entity(s)
            for r in sorted(self._forward[s]):
                for o in sorted(self._forward[s][r], key=node_key):
                    yield Triple(subj, r, self.resolve(o))

    # -- lookups ------------------------------------------------------------
    def has_entity(self, entity: EntityRef | str) -> bool:
        eid = entity.id if isinstance(entity, EntityRef) else entity
        return eid in self._entity_ids

    def has_triple(self, subject: NodeValue, relation: RelationRef, obj: NodeValue) -> bool:
        if not isinstance(subject, EntityRef):
            return False
        return (subject.id, relation, obj.key) in self._keys

    def entity(self, entity_id: str) -> EntityRef:
        return EntityRef(entity_id, self._names.get(entity_id))

    def resolve(self, node: NodeValue) -> NodeValue:
        """Attach the friendly name (if any) to an entity reference."""
        if isinstance(node, EntityRef):
            return self.entity(node.id)
        return node

    def label(self, node: NodeValue) -> str:
        if isinstance(node, EntityRef):
            return self._names.get(node.id) or node.id
        return node.value

    def out_relations(self, entity: NodeValue) -> frozenset[RelationRef]:
        if not isinstance(entity, EntityRef):
            return frozenset()
        return frozenset(self._forward.get(entity.id, {}))

    def tail_entities(self, entity: NodeValue, relation: RelationRef) -> frozenset[NodeValue]:
        if not isinstance(entity, EntityRef):
            return frozenset()
        tails = self._forward.get(entity.id, {}).get(relation, frozenset())
        return frozenset(self.resolve(t) for t in tails)

    def neighbours(self, entity: NodeValue) -> list[tuple[RelationRef, NodeValue]]:
        """Outgoing (relation, object) pairs in canonical order."""
        if not isinstance(entity, EntityRef):
            return []
        rels = self._forward.get(entity.id, {})
        return [(r, o) for r in sorted(rels) for o in sorted(rels[r], key=node_key)]


# -- loading ------------------------------------------------------------------

def _lines(source) -> Iterable[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            yield from fh.read().splitlines()
    else:
        for line in source:
            yield line.rstrip("\r\n")


def parse_triple_row(line: str, row: int) -> Triple:
    fields = line.split("\t")
    if len(fields) != 3:
        raise GraphLoadError(f"expected 3 tab-separated fields, got {len(fields)}", row)
    subj, rel, obj = fields
    if not subj or not rel or not obj:
        raise GraphLoadError("empty field", row)
    if subj.startswith(LITERAL_PREFIX):
        raise GraphLoadError("literal in subject position", row)
    try:
        return Triple(EntityRef(subj), RelationRef.parse(rel), parse_node(obj))
    except ValueError as exc:
        raise GraphLoadError(str(exc), row) from None


def read_triples(source) -> Iterator[Triple]:
    for row, line in enumerate(_lines(source), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        yield parse_triple_row(line, row)


def load_names(source) -> dict[str, str]:
    """Read ``id<TAB>label`` lines; a second binding for an id is an error."""
    names: dict[str, str] = {}
    for row, line in enumerate(_lines(source), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise GraphLoadError("expected 'id<TAB>label'", row)
        eid, label = parts
        if eid in names:
            raise GraphLoadError(f"duplicate name binding for {eid!r}", row)
        names[eid] = label
    return names


def load_graph(source=(), names=None) -> KnowledgeGraph:
    """Build a graph from a triple file path or an iterable of lines.

    ``names`` may be a path, an iterable of lines or a ready mapping.
    """
    if names is not None and not isinstance(names, Mapping):
        names = load_names(names)
    return KnowledgeGraph(read_triples(source), names)


# -- paths ----------------------------------------------------------------------

@dataclass(frozen=True)
class ReasoningPath:
    topic: EntityRef
    hops: tuple[tuple[RelationRef, NodeValue], ...] = ()

    @property
    def depth(self) -> int:
        return len(self.hops)

    @property
    def nodes(self) -> tuple[NodeValue, ...]:
        return (self.topic,) + tuple(n for _, n in self.hops)

    @property
    def relations(self) -> tuple[RelationRef, ...]:
        return tuple(r for r, _ in self.hops)

    @property
    def end(self) -> NodeValue:
        return self.hops[-1][1] if self.hops else self.topic

    def extend(self, relation: RelationRef, node: NodeValue) -> "ReasoningPath":
        return ReasoningPath(self.topic, self.hops + ((relation, node),))

    def serialize(self) -> str:
        parts = [self.topic.id]
        for r, n in self.hops:
            parts += [r.dotted, n.key]
        return " > ".join(parts)

    def render(self, graph: KnowledgeGraph | None = None) -> str:
        label = graph.label if graph is not None else (lambda n: n.label)
        parts = [label(self.topic)]
        for r, n in self.hops:
            parts += [r.dotted, label(n)]
        return " -> ".join(parts)

    def is_valid(self, graph: KnowledgeGraph) -> bool:
        prev: NodeValue = self.topic
        for r, n in self.hops:
            if not graph.has_triple(prev, r, n):
                return False
            prev = n
        return True

    def __str__(self) -> str:
        return self.serialize()


def _check_endpoints(graph: KnowledgeGraph, topic: EntityRef, max_depth: int) -> None:
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if not graph.has_entity(topic):
        raise UnknownTopicError(topic.id)


def enumerate_paths(graph: KnowledgeGraph, topic: EntityRef, answer: NodeValue,
                    max_depth: int) -> list[ReasoningPath]:
    """All simple paths topic -> answer with at most ``max_depth`` hops."""
    _check_endpoints(graph, topic, max_depth)
    topic = graph.entity(topic.id)
    target = answer.key
    found: list[ReasoningPath] = []

    def walk(path: ReasoningPath, seen: frozenset[str]):
        end = path.end
        if end.key == target:
            found.append(path)
            return
        if path.depth == max_depth:
            return
        for r, o in graph.neighbours(end):
            if o.key not in seen:
                walk(path.extend(r, graph.resolve(o)), seen | {o.key})

    walk(ReasoningPath(topic), frozenset({topic.key}))
    return sorted(found, key=ReasoningPath.serialize)


def shortest_paths(graph: KnowledgeGraph, topic: EntityRef, answer: NodeValue,
                   max_depth: int) -> list[ReasoningPath]:
    """All minimum-depth paths topic -> answer within ``max_depth`` hops."""
    _check_endpoints(graph, topic, max_depth)
    topic = graph.entity(topic.id)
    target = answer.key
    if topic.key == target:
        return [ReasoningPath(topic)]

    dist = {topic.key: 0}
    preds: dict[str, list[tuple[NodeValue, RelationRef]]] = defaultdict(list)
    nodes: dict[str, NodeValue] = {topic.key: topic}
    queue = deque([topic])
    while queue:
        cur = queue.popleft()
        d = dist[cur.key]
        if d == max_depth or (target in dist and d >= dist[target]):
            continue
        for r, o in graph.neighbours(cur):
            k = o.key
            if k not in dist:
                dist[k] = d + 1
                nodes[k] = graph.resolve(o)
                queue.append(o)
            if dist[k] == d + 1:
                preds[k].append((cur, r))
    if target not in dist:
        return []

    def back(key: str) -> list[tuple[tuple[RelationRef, NodeValue], ...]]:
        if key == topic.key:
            return [()]
        out = []
        for prev, r in preds[key]:
            for hops in back(prev.key):
                out.append(hops + ((r, nodes[key]),))
        return out

    paths = [ReasoningPath(topic, hops) for hops in back(target)]
    return sorted(paths, key=ReasoningPath.serialize)
