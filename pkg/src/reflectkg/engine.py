"""Hop-by-hop tree search driven by reflection tokens.

Each hop has two half-steps.  An entity node (or the root) asks the
generator for a retrieval token; on ``[Relation Retrieval]`` it retrieves
candidate relations (query + hypo-generator output), scores each with a
relevance token and spawns one relation node per candidate.  Each surviving
relation node then fetches its tail entities, receives one rationality token
and a relevance token per tail, and spawns an entity node that holds the
surviving tails.  Candidates whose greedy token is ``[Unrelevant]`` or
``[Unreasonable]`` are kept in the tree as pruned leaves.  After a hop the
open entity nodes are ranked and cut to the beam width.  ``[No Retrieval]``
turns a node into an answer leaf scored with a utility token.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .gateway import Gateway, GenerationContext, Trail, TransportError, legal_choice
from .kg import EntityRef, KnowledgeGraph, Literal, NodeValue, RelationRef, UnknownTopicError, node_key
from .retrieval import EmbeddingProvider, LexicalProvider, retrieve_entities, retrieve_relations
from .scoring import (
    NodeScores,
    Rationality,
    Relevance,
    Retrieval,
    ScoreConfig,
    TokenDistribution,
    path_final_score,
    rationality_score,
    relevance_score,
    utility_score,
)

TRACE_SCHEMA = "reflectkg.trace/v1"
DOT_SCHEMA = "reflectkg.trace-dot/v1"

OPEN, PRUNED, ANSWERED, CLOSED = "open", "pruned", "answered", "closed"


class NoAnswerError(RuntimeError):
    """No answer leaf was produced; ``trees`` keeps whatever was built."""

    def __init__(self, message: str, trees: Sequence["ReasoningTree"] = ()):
        super().__init__(message)
        self.trees = list(trees)


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int = 3
    max_depth: int = 2
    top_k: int = 5
    scores: ScoreConfig = field(default_factory=ScoreConfig)
    mode: str = "beam"
    n_hypotheses: int = 3
    use_hypotheses: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("beam", "exhausted"):
            raise ValueError(f"unknown search mode {self.mode!r}")
        if self.mode == "beam" and self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.n_hypotheses < 1:
            raise ValueError("n_hypotheses must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class TreeNode:
    kind: str  # root | relation | entity | answer
    depth: int
    trail: Trail
    key: str
    nodes: tuple[NodeValue, ...] = ()
    source: NodeValue | None = None
    relation: RelationRef | None = None
    scores: NodeScores = field(default_factory=NodeScores)
    status: str = OPEN
    prune_reason: object | None = None
    utility: TokenDistribution | None = None
    depth_forced: bool = False
    tokens: dict[str, str] = field(default_factory=dict)
    id: int = -1
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    path_score: float = 0.0

    @property
    def is_answer(self) -> bool:
        return self.kind == "answer"

    def hop_text(self, graph: KnowledgeGraph | None = None) -> str:
        label = graph.label if graph is not None else (lambda n: n.label)
        if self.kind == "relation":
            return f"{label(self.source)} -> {self.relation.dotted}"
        if self.kind == "answer":
            return "Answer: " + ";".join(label(n) for n in self.nodes)
        return ", ".join(label(n) for n in self.nodes)


@dataclass(frozen=True)
class AnswerSet:
    answers: tuple[NodeValue, ...]
    utility: TokenDistribution | None
    score: float
    node_id: int
    depth_forced: bool = False
    key: str = ""

    @property
    def abstained(self) -> bool:
        return not self.answers


class ReasoningTree:
    def __init__(self, query: str, topic: EntityRef):
        self.query = query
        self.topic = topic
        self.nodes: list[TreeNode] = []
        self.failure: str | None = None
        root = TreeNode("root", 0, Trail(topic), topic.id, nodes=(topic,))
        self._add(root, None)

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def _add(self, node: TreeNode, parent: TreeNode | None) -> TreeNode:
        node.id = len(self.nodes)
        if parent is not None:
            node.parent = parent.id
            parent.children.append(node.id)
            node.path_score = parent.path_score + node.scores.total
        self.nodes.append(node)
        return node

    def path_to(self, node: TreeNode) -> list[TreeNode]:
        out = [node]
        while out[-1].parent is not None:
            out.append(self.nodes[out[-1].parent])
        return out[::-1]

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes if not n.children]

    def answer_leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes if n.is_answer]

    def final_score(self, node: TreeNode, aggregate: str = "sum") -> float:
        return path_final_score([n.scores.total for n in self.path_to(node)[1:]], aggregate)

    def frontier(self, depth: int) -> list[TreeNode]:
        return [n for n in self.nodes if n.kind == "entity" and n.depth == depth and n.status == OPEN]


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


class _Expander:
    """Turns one node into child drafts.  Pure with respect to the tree."""

    def __init__(self, query: str, graph: KnowledgeGraph, cfg: BeamConfig, gateway: Gateway,
                 provider: EmbeddingProvider):
        self.query = query
        self.graph = graph
        self.cfg = cfg
        self.gateway = gateway
        self.provider = provider

    def _label(self, n: NodeValue) -> str:
        return self.graph.label(n)

    def answer(self, node: TreeNode, ctx: GenerationContext, forced: bool) -> TreeNode:
        answers = tuple(node.nodes) if node.kind == "entity" else ()
        util = self.gateway.predict_utility(ctx, answers)
        text = "Answer: " + ";".join(self._label(a) for a in answers)
        seq = _mean(self.gateway.sequence_logprobs(ctx, text))
        scores = NodeScores.compute(seq, 0.0, 0.0, utility_score(util, self.cfg.scores.utility_mode), self.cfg.scores)
        key = f"{ctx.key()} => {'|'.join(node_key(a) for a in answers)}"
        return TreeNode("answer", node.depth, node.trail, key, nodes=answers, scores=scores, status=ANSWERED,
                        utility=util, depth_forced=forced, tokens={"utility": util.argmax().surface})

    def expand_entity(self, node: TreeNode) -> list[TreeNode]:
        ctx = GenerationContext(self.query, node.trail)
        choice = legal_choice(self.gateway.predict_retrieval(ctx), [Retrieval.RELATION, Retrieval.NO])
        if choice == Retrieval.NO:
            return [self.answer(node, ctx, forced=False)]
        if node.depth >= self.cfg.max_depth:
            return [self.answer(node, ctx, forced=True)]
        drafts: list[TreeNode] = []
        for member in node.nodes:
            if isinstance(member, Literal):
                continue
            mctx = GenerationContext(self.query, node.trail.narrow(member))
            hypos = self.gateway.hypo_relations(mctx, self.cfg.n_hypotheses) if self.cfg.use_hypotheses else []
            results = retrieve_relations(self.query, member, hypos, self.graph, self.cfg.top_k, self.provider)
            kctx = replace(mctx, knowledge=tuple(r.candidate.dotted for r in results))
            for res in results:
                rel = res.candidate
                dist = self.gateway.predict_relevance(kctx, rel)
                seq = _mean(self.gateway.sequence_logprobs(kctx, rel.dotted))
                # relation-only half-step carries a neutral rationality
                scores = NodeScores.compute(seq, relevance_score(dist, self.cfg.scores), 1.0, 0.0, self.cfg.scores)
                token = dist.argmax()
                drafts.append(TreeNode(
                    "relation", node.depth + 1, mctx.trail, f"{mctx.key()} > {rel.dotted}",
                    source=member, relation=rel, scores=scores,
                    status=PRUNED if token == Relevance.UNRELEVANT else OPEN,
                    prune_reason=token if token == Relevance.UNRELEVANT else None,
                    tokens={"relevance": token.surface},
                ))
        drafts.sort(key=lambda d: d.key)
        return drafts

    def expand_relation(self, node: TreeNode) -> list[TreeNode]:
        rel, member = node.relation, node.source
        rctx = GenerationContext(self.query, node.trail, relation=rel)
        choice = legal_choice(self.gateway.predict_retrieval(rctx), [Retrieval.ENTITY, Retrieval.NO])
        if choice == Retrieval.NO:
            abstain = TreeNode("relation", node.depth, node.trail, node.key)
            return [self.answer(abstain, rctx, forced=False)]
        seen = {node_key(node.trail.topic)} | {node_key(n) for _, ns in node.trail.hops for n in ns}
        tails = [t for t in retrieve_entities(self.graph, member, rel) if node_key(t) not in seen]
        if not tails:
            return []
        triples = tuple(f"({self._label(member)}, {rel.dotted}, {self._label(t)})" for t in tails)
        ectx = GenerationContext(self.query, node.trail.extend(rel, tails), knowledge=triples)
        rat_dist = self.gateway.predict_rationality(ectx)
        rat = rationality_score(rat_dist, self.cfg.scores)
        rat_token = rat_dist.argmax()
        pctx = replace(rctx, knowledge=triples)
        rel_dists = {node_key(t): self.gateway.predict_relevance(pctx, t) for t in tails}
        seq = _mean(self.gateway.sequence_logprobs(ectx, ";".join(self._label(t) for t in tails)))

        def entity(nodes, status, reason) -> TreeNode:
            rels = [relevance_score(rel_dists[node_key(t)], self.cfg.scores) for t in nodes]
            trail = node.trail.extend(rel, nodes)
            tokens = {"rationality": rat_token.surface}
            tokens.update({f"relevance:{node_key(t)}": rel_dists[node_key(t)].argmax().surface for t in nodes})
            return TreeNode("entity", node.depth, trail, trail.key(), nodes=tuple(nodes),
                            scores=NodeScores.compute(seq, _mean(rels), rat, 0.0, self.cfg.scores),
                            status=status, prune_reason=reason, tokens=tokens)

        if rat_token == Rationality.UNREASONABLE:
            return [entity(tails, PRUNED, Rationality.UNREASONABLE)]
        keep = [t for t in tails if rel_dists[node_key(t)].argmax() != Relevance.UNRELEVANT]
        drafts = [entity([t], PRUNED, Relevance.UNRELEVANT) for t in tails if t not in keep]
        if keep:
            drafts.append(entity(keep, OPEN, None))
        drafts.sort(key=lambda d: d.key)
        return drafts


def expand_node(node: TreeNode, query: str, graph: KnowledgeGraph, cfg: BeamConfig, gateway: Gateway,
                provider: EmbeddingProvider | None = None) -> list[TreeNode]:
    """Child drafts of ``node``; the caller attaches them to the tree."""
    if node.status != OPEN:
        raise ValueError(f"cannot expand a {node.status} node")
    ex = _Expander(query, graph, cfg, gateway, provider or LexicalProvider())
    if node.kind == "relation":
        return ex.expand_relation(node)
    if node.kind in ("root", "entity"):
        return ex.expand_entity(node)
    raise ValueError(f"cannot expand a {node.kind} node")


def beam_select(frontier: Sequence[TreeNode], beam_width: int, mode: str = "beam") -> list[TreeNode]:
    """Top-``beam_width`` nodes by node score; ties go to the smaller path key."""
    if mode == "exhausted":
        return list(frontier)
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    return sorted(frontier, key=lambda n: (-n.scores.total, n.key))[:beam_width]


def _map(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_inference(query: str, topic: EntityRef | str, graph: KnowledgeGraph, cfg: BeamConfig | None = None,
                  gateway: Gateway | None = None, provider: EmbeddingProvider | None = None) -> ReasoningTree:
    """Grow the reasoning tree for one topic entity.

    A backend failure stops the search; the partial tree is returned with
    :attr:`ReasoningTree.failure` set.
    """
    if gateway is None:
        raise ValueError("a gateway is required")
    cfg = cfg or BeamConfig()
    topic_id = topic.id if isinstance(topic, EntityRef) else topic
    if not graph.has_entity(topic_id):
        raise UnknownTopicError(topic_id)
    tree = ReasoningTree(query, graph.entity(topic_id))
    ex = _Expander(query, graph, cfg, gateway, provider or LexicalProvider())
    frontier = [tree.root]
    try:
        while frontier:
            rel_nodes: list[TreeNode] = []
            for parent, drafts in zip(frontier, _map(ex.expand_entity, frontier, cfg.workers)):
                for d in drafts:
                    tree._add(d, parent)
                    if d.kind == "relation" and d.status == OPEN:
                        rel_nodes.append(d)
                if not drafts:
                    parent.status = CLOSED
            candidates: list[TreeNode] = []
            for parent, drafts in zip(rel_nodes, _map(ex.expand_relation, rel_nodes, cfg.workers)):
                for d in drafts:
                    tree._add(d, parent)
                    if d.kind == "entity" and d.status == OPEN:
                        candidates.append(d)
                if not drafts:
                    parent.status = CLOSED
            frontier = beam_select(candidates, cfg.beam_width, cfg.mode)
            chosen = {n.id for n in frontier}
            for n in candidates:
                if n.id not in chosen:
                    n.status = CLOSED
    except TransportError as exc:
        tree.failure = str(exc)
    return tree


def finalize_answers(tree: ReasoningTree, cfg: BeamConfig | None = None) -> list[AnswerSet]:
    """Answer leaves ranked by backtracked path score (highest first)."""
    cfg = cfg or BeamConfig()
    leaves = tree.answer_leaves()
    if not leaves:
        raise NoAnswerError(f"no answer leaf for {tree.query!r} from {tree.topic.id}")
    ranked = [AnswerSet(leaf.nodes, leaf.utility, tree.final_score(leaf, cfg.scores.aggregate), leaf.id,
                        leaf.depth_forced, leaf.key) for leaf in leaves]
    ranked.sort(key=lambda a: (-a.score, a.key))
    return ranked


def answer_question(query: str, topics: Iterable[EntityRef | str], graph: KnowledgeGraph,
                    cfg: BeamConfig | None = None, gateway: Gateway | None = None,
                    provider: EmbeddingProvider | None = None) -> tuple[list[ReasoningTree], list[AnswerSet]]:
    """One tree per topic entity; answers from all trees merged by score."""
    cfg = cfg or BeamConfig()
    trees, ranked = [], []
    for topic in topics:
        tree = run_inference(query, topic, graph, cfg, gateway, provider)
        trees.append(tree)
        try:
            ranked.extend(finalize_answers(tree, cfg))
        except NoAnswerError:
            continue
    if not ranked:
        raise NoAnswerError(f"no answer leaf for {query!r}", trees)
    ranked.sort(key=lambda a: (-a.score, a.key))
    return trees, ranked


# -- trace export -----------------------------------------------------------------

def tree_to_trace(tree: ReasoningTree, graph: KnowledgeGraph | None = None) -> dict:
    nodes = []
    for n in tree.nodes:
        nodes.append({
            "id": n.id,
            "parent": n.parent,
            "depth": n.depth,
            "kind": n.kind,
            "hop": n.hop_text(graph),
            "key": n.key,
            "scores": n.scores.to_json(),
            "path_score": n.path_score,
            "status": n.status,
            "prune_reason": n.prune_reason.surface if n.prune_reason is not None else None,
            "tokens": dict(sorted(n.tokens.items())),
            "answers": [node_key(a) for a in n.nodes] if n.is_answer else None,
            "depth_forced": n.depth_forced,
        })
    return {"schema": TRACE_SCHEMA, "query": tree.query, "topic": tree.topic.id,
            "failure": tree.failure, "nodes": nodes}


def dumps_trace(trace) -> str:
    if isinstance(trace, list):
        trace = {"schema": TRACE_SCHEMA, "trees": trace}
    return json.dumps(trace, indent=2, sort_keys=True, ensure_ascii=False)


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


_STATUS_STYLE = {PRUNED: "color=red,style=dashed", ANSWERED: "color=darkgreen,peripheries=2",
                 CLOSED: "color=gray", OPEN: "color=black"}


def trace_to_dot(trace: dict) -> str:
    """Graphviz rendering of one or more exported traces."""
    if trace.get("schema") != TRACE_SCHEMA:
        raise ValueError(f"unsupported trace schema {trace.get('schema')!r}")
    trees = trace["trees"] if "trees" in trace else [trace]
    lines = [f"// schema: {DOT_SCHEMA}", "digraph reasoning {", "  node [shape=box,fontsize=10];"]
    for t_idx, t in enumerate(trees):
        lines.append(f'  subgraph cluster_{t_idx} {{ label="{_dot_escape(t["topic"])}";')
        for n in t["nodes"]:
            label = f'{n["kind"]} d{n["depth"]}\\n{_dot_escape(n["hop"])}\\nS={n["scores"]["total"]:.4f}'
            if n["prune_reason"]:
                label += f'\\n{_dot_escape(n["prune_reason"])}'
            lines.append(f'    t{t_idx}n{n["id"]} [label="{label}",{_STATUS_STYLE[n["status"]]}];')
        for n in t["nodes"]:
            if n["parent"] is not None:
                lines.append(f'    t{t_idx}n{n["parent"]} -> t{t_idx}n{n["id"]};')
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
