"""Generator and critic model access.

Two implementations share one surface:

* :class:`MockGateway` answers from a declarative rule table keyed on the
  *content* of each request, so it is deterministic regardless of call order
  or thread interleaving.
* :class:`CompletionGateway` talks to a completion endpoint that reports
  per-token log-probabilities and top alternatives; reflection-token
  distributions are read off those alternatives.
"""

from __future__ import annotations

import fnmatch
import json
import logging
import os
import random
import re
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Protocol, Sequence

from .kg import EntityRef, KnowledgeGraph, NodeValue, RelationRef, node_key
from .scoring import (
    DomainError,
    Family,
    Rationality,
    Relevance,
    TokenDistribution,
    Utility,
    coerce_category,
    parse_token,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "REFLECTKG_API_KEY"


class TransportError(RuntimeError):
    """The model backend failed or replied with something unusable."""


# -- request context ------------------------------------------------------------

Hop = tuple[RelationRef, tuple[NodeValue, ...]]


@dataclass(frozen=True)
class Trail:
    """Topic entity plus the hops walked so far; a hop may end in several nodes."""

    topic: EntityRef
    hops: tuple[Hop, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.hops)

    @property
    def end(self) -> tuple[NodeValue, ...]:
        return self.hops[-1][1] if self.hops else (self.topic,)

    def extend(self, relation: RelationRef, nodes: Iterable[NodeValue]) -> "Trail":
        return Trail(self.topic, self.hops + ((relation, tuple(nodes)),))

    def narrow(self, node: NodeValue) -> "Trail":
        """Same trail with the last hop restricted to ``node``."""
        if not self.hops:
            return self
        rel, _ = self.hops[-1]
        return Trail(self.topic, self.hops[:-1] + ((rel, (node,)),))

    def key(self) -> str:
        parts = [self.topic.id]
        for rel, nodes in self.hops:
            parts.append(rel.dotted)
            parts.append("|".join(node_key(n) for n in nodes))
        return " > ".join(parts)

    def render(self, graph: KnowledgeGraph | None = None) -> str:
        label = graph.label if graph is not None else (lambda n: n.label)
        parts = [label(self.topic)]
        for rel, nodes in self.hops:
            parts.append(rel.dotted)
            parts.append(", ".join(label(n) for n in nodes))
        return " -> ".join(parts)


@dataclass(frozen=True)
class GenerationContext:
    query: str
    trail: Trail
    relation: RelationRef | None = None
    knowledge: tuple[str, ...] = ()

    @property
    def depth(self) -> int:
        return self.trail.depth + 1

    def key(self) -> str:
        k = self.trail.key()
        if self.relation is not None:
            k += " > " + self.relation.dotted
        return k


@dataclass(frozen=True)
class RelationHypothesis:
    surface: str
    depth: int

    def __post_init__(self):
        if not self.surface or any(c.isspace() for c in self.surface):
            raise ValueError(f"invalid relation hypothesis {self.surface!r}")


@dataclass(frozen=True)
class CriticVerdict:
    token: Any
    explanation: str = ""


@dataclass(frozen=True)
class GenerationStep:
    """One scripted or decoded model step."""

    text: str = ""
    distribution: TokenDistribution | None = None
    logprobs: tuple[float, ...] = ()
    hypotheses: tuple[str, ...] = ()


class Gateway(Protocol):
    def predict_retrieval(self, ctx: GenerationContext) -> TokenDistribution: ...
    def hypo_relations(self, ctx: GenerationContext, n: int) -> list[RelationHypothesis]: ...
    def predict_relevance(self, ctx: GenerationContext, candidate) -> TokenDistribution: ...
    def predict_rationality(self, ctx: GenerationContext) -> TokenDistribution: ...
    def predict_utility(self, ctx: GenerationContext, answers: Sequence[NodeValue]) -> TokenDistribution: ...
    def sequence_logprobs(self, ctx: GenerationContext, segment: str) -> list[float]: ...


class Critic(Protocol):
    def critic_relevance(self, query: str, history: str, candidates: Sequence[str],
                         kind: str) -> list[CriticVerdict]: ...
    def critic_rationality(self, query: str, path: Trail) -> CriticVerdict: ...
    def critic_utility(self, query: str, answers: Sequence[str]) -> CriticVerdict: ...


def candidate_key(candidate) -> str:
    if isinstance(candidate, RelationRef):
        return candidate.dotted
    if isinstance(candidate, (EntityRef,)) or hasattr(candidate, "key"):
        return candidate.key
    return str(candidate)


def _require_hops(path: Trail) -> None:
    if path.depth < 1:
        raise ValueError("rationality needs a path with at least one hop")


def _require_n(n: int) -> None:
    if n < 1:
        raise ValueError("number of hypotheses must be >= 1")


# -- mock ---------------------------------------------------------------------------

_TASKS = {
    "retrieval", "hypotheses", "relevance", "rationality", "utility", "sequence",
    "critic_relevance", "critic_rationality", "critic_utility",
}
_TASK_FAMILY = {
    "retrieval": Family.RETRIEVAL,
    "relevance": Family.RELEVANCE,
    "rationality": Family.RATIONALITY,
    "utility": Family.UTILITY,
    "critic_relevance": Family.RELEVANCE,
    "critic_rationality": Family.RATIONALITY,
    "critic_utility": Family.UTILITY,
}


@dataclass(frozen=True)
class MockRule:
    task: str
    query: str = "*"
    path: str = "*"
    candidate: str = "*"
    kind: str = "*"
    step: GenerationStep = field(default_factory=GenerationStep)

    def matches(self, task: str, query: str, path: str, candidate: str, kind: str) -> bool:
        return (self.task == task
                and fnmatch.fnmatchcase(query, self.query)
                and fnmatch.fnmatchcase(path, self.path)
                and fnmatch.fnmatchcase(candidate, self.candidate)
                and fnmatch.fnmatchcase(kind, self.kind))

    @classmethod
    def from_json(cls, entry: Mapping[str, Any]) -> "MockRule":
        task = entry.get("task")
        if task not in _TASKS:
            raise ValueError(f"unknown mock task {task!r}")
        dist = None
        family = _TASK_FAMILY.get(task)
        if "token" in entry:
            dist = TokenDistribution.point(coerce_category(entry["token"], family))
        elif "logprobs" in entry and family is not None:
            dist = TokenDistribution.from_json(family, entry["logprobs"])
        elif family is not None:
            raise ValueError(f"{task} rule needs 'token' or 'logprobs'")
        seq = tuple(entry.get("logprobs", ())) if task == "sequence" else tuple(entry.get("segment", ()))
        step = GenerationStep(
            text=entry.get("explanation", ""),
            distribution=dist,
            logprobs=tuple(float(x) for x in seq),
            hypotheses=tuple(entry.get("hypotheses", ())),
        )
        return cls(task, entry.get("query", "*"), entry.get("path", "*"),
                   entry.get("candidate", entry.get("answers", "*")), entry.get("kind", "*"), step)


class MockGateway:
    """Rule-table stand-in for both the generator and the critic.

    Rules are tried in file order and the first match wins.  Unmatched
    requests fall back to fixed defaults: uniform distributions for the
    generator, no hypotheses, empty segment log-probabilities, and for the
    critic ``[Fully Relevant]`` when a candidate equals the query phrase,
    otherwise ``[Partially Relevant]`` / ``[Partially Reasonable]`` /
    ``[Utility:3]`` (``[Utility:1]`` for an empty answer list).
    """

    def __init__(self, rules: Iterable[MockRule | Mapping[str, Any]] = ()):
        self.rules = tuple(r if isinstance(r, MockRule) else MockRule.from_json(r) for r in rules)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MockGateway":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(data["rules"] if isinstance(data, dict) else data)

    def _lookup(self, task: str, query: str, path: str = "", candidate: str = "",
                kind: str = "") -> GenerationStep | None:
        for rule in self.rules:
            if rule.matches(task, query, path, candidate, kind):
                return rule.step
        return None

    # generator side
    def predict_retrieval(self, ctx: GenerationContext) -> TokenDistribution:
        step = self._lookup("retrieval", ctx.query, ctx.key())
        return step.distribution if step else TokenDistribution.uniform(Family.RETRIEVAL)

    def hypo_relations(self, ctx: GenerationContext, n: int) -> list[RelationHypothesis]:
        _require_n(n)
        step = self._lookup("hypotheses", ctx.query, ctx.key())
        if step is None:
            return []
        return [RelationHypothesis(h, ctx.depth) for h in step.hypotheses[:n]]

    def predict_relevance(self, ctx: GenerationContext, candidate) -> TokenDistribution:
        step = self._lookup("relevance", ctx.query, ctx.key(), candidate_key(candidate))
        return step.distribution if step else TokenDistribution.uniform(Family.RELEVANCE)

    def predict_rationality(self, ctx: GenerationContext) -> TokenDistribution:
        _require_hops(ctx.trail)
        step = self._lookup("rationality", ctx.query, ctx.key())
        return step.distribution if step else TokenDistribution.uniform(Family.RATIONALITY)

    def predict_utility(self, ctx: GenerationContext, answers: Sequence[NodeValue]) -> TokenDistribution:
        key = "|".join(candidate_key(a) for a in answers)
        step = self._lookup("utility", ctx.query, ctx.key(), key)
        return step.distribution if step else TokenDistribution.uniform(Family.UTILITY)

    def sequence_logprobs(self, ctx: GenerationContext, segment: str) -> list[float]:
        step = self._lookup("sequence", ctx.query, ctx.key(), segment)
        return list(step.logprobs) if step else []

    # critic side
    def critic_relevance(self, query: str, history: str, candidates: Sequence[str],
                         kind: str) -> list[CriticVerdict]:
        if not candidates:
            raise ValueError("critic_relevance needs at least one candidate")
        out = []
        for cand in candidates:
            step = self._lookup("critic_relevance", query, history, cand, kind)
            if step is not None:
                out.append(CriticVerdict(step.distribution.argmax(), step.text))
            elif cand.strip().casefold() == query.strip().casefold():
                out.append(CriticVerdict(Relevance.FULLY, "candidate restates the query"))
            else:
                out.append(CriticVerdict(Relevance.PARTIALLY, "default"))
        return out

    def critic_rationality(self, query: str, path: Trail) -> CriticVerdict:
        _require_hops(path)
        step = self._lookup("critic_rationality", query, path.key())
        if step is None:
            return CriticVerdict(Rationality.PARTIALLY, "default")
        return CriticVerdict(step.distribution.argmax(), step.text)

    def critic_utility(self, query: str, answers: Sequence[str]) -> CriticVerdict:
        step = self._lookup("critic_utility", query, "", ";".join(answers))
        if step is not None:
            return CriticVerdict(step.distribution.argmax(), step.text)
        if not answers:
            return CriticVerdict(Utility.U1, "no answer given")
        return CriticVerdict(Utility.U3, "default")


# -- completion backend -------------------------------------------------------------

_DELIMS = "@+=^{} \t\n"

RELATION_CRITIC_PROMPT = """\
Input: a query, its topic entity, evidence made of knowledge-graph relations, and optional earlier reasoning.
Rate how much each relation helps answer the query and give a short reason per relation.
Use exactly one of [Fully Relevant], [Partially Relevant], [Unrelevant] for every relation:
- [Fully Relevant]: the relation answers the query directly, alone or together with the earlier reasoning.
- [Partially Relevant]: the relation does not answer the query but points toward the answer.
- [Unrelevant]: the relation carries nothing useful for the query.
Answer with one line per relation, in the order given, formatted as: relation: [token] reason."""

ENTITY_CRITIC_PROMPT = """\
Input: a query, evidence made of knowledge-graph triples (head entity, relation, tail entity), and optional earlier reasoning.
Rate how relevant each tail entity is to the query and give a short reason per entity.
Use exactly one of [Fully Relevant], [Partially Relevant], [Unrelevant] for every entity.
Answer with one line per entity, in the order given, formatted as: entity: [token] reason."""

RATIONALITY_CRITIC_PROMPT = """\
Input: a query and a reasoning path that starts at the topic entity.
Judge whether the path is a logical, coherent route toward the answer and give a short reason.
Use exactly one of [Fully Reasonable], [Partially Reasonable], [Unreasonable]."""

UTILITY_CRITIC_PROMPT = """\
Input: a query and its answers; several answers are separated by commas (,).
Rate how useful the answers are as a response to the query and give a short reason.
[Utility:5]: complete and specific; nothing important is missing.
[Utility:4]: mostly satisfies the query; small gaps such as a missing extra answer.
[Utility:3]: correct but clearly too vague or too general.
[Utility:2]: on topic but wrong, or does not meet what was asked.
[Utility:1]: unrelated to the query, or no answer is given."""


@dataclass(frozen=True)
class Completion:
    text: str
    token_logprobs: tuple[float, ...]
    top_logprobs: tuple[Mapping[str, float], ...]
    text_offset: tuple[int, ...] = ()


def _strip_token(tok: str) -> str:
    return tok.strip(_DELIMS)


def distribution_from_alternatives(completion: Completion, family: Family) -> TokenDistribution:
    """Build a distribution from the first position whose alternatives name ``family`` tokens."""
    for alts in completion.top_logprobs:
        entries = {}
        for tok, lp in alts.items():
            try:
                cat = parse_token(_strip_token(tok))
            except DomainError:
                continue
            if cat.family == family and cat not in entries:
                entries[cat] = lp
        if entries:
            return TokenDistribution(family, entries)
    raise TransportError(f"completion carries no {family.value} token alternatives")


def render_trail(ctx: GenerationContext, graph: KnowledgeGraph | None = None) -> str:
    """Training-format prefix for the hops already walked."""
    label = graph.label if graph is not None else (lambda n: n.label)
    out = []
    prev: tuple[NodeValue, ...] = (ctx.trail.topic,)
    for rel, nodes in ctx.trail.hops:
        out.append(f"@[Retrieve Relation]@{{<paragraph>{rel.dotted}</paragraph>}}{rel.dotted}+[Fully Relevant]+")
        triples = ";".join(f"({label(h)}, {rel.dotted}, {label(n)})" for h in prev[:1] for n in nodes)
        marks = "".join(f"{label(n)}+[Fully Relevant]+" for n in nodes)
        out.append(f"@[Retrieve Entity]@{{<paragraph>{triples}</paragraph>}}{marks}")
        prev = nodes
    return "".join(out)


class CompletionGateway:
    """Generator/critic backed by a JSON completion endpoint.

    Request: ``{"request_id", "prompt", "max_tokens", "logprobs", "top_logprobs", "echo"}``.
    Response: ``{"request_id", "text", "token_logprobs", "top_logprobs", "text_offset"}``.
    Failed calls are retried ``retries`` times with full-jitter backoff and
    then raise :class:`TransportError`.
    """

    def __init__(self, endpoint: str, *, api_key: str | None = None, client=None, retries: int = 2,
                 backoff: float = 0.5, timeout: float = 60.0, top_logprobs: int = 10,
                 graph: KnowledgeGraph | None = None, sleep=time.sleep, seed: int | None = None):
        import httpx

        self.endpoint = endpoint
        self.retries = retries
        self.backoff = backoff
        self.top_logprobs = top_logprobs
        self.graph = graph
        self._sleep = sleep
        self._rng = random.Random(seed)
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)
        self._httpx = httpx

    def complete(self, prompt: str, max_tokens: int = 16, echo: bool = False) -> Completion:
        rid = uuid.uuid4().hex
        payload = {"request_id": rid, "prompt": prompt, "max_tokens": max_tokens, "logprobs": True,
                   "top_logprobs": self.top_logprobs, "echo": echo}
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self._rng.uniform(0.0, self.backoff * 2 ** (attempt - 1)))
            try:
                resp = self._client.post(self.endpoint, json=payload)
                resp.raise_for_status()
                data = resp.json()
            except (self._httpx.HTTPError, ValueError) as exc:
                log.warning("completion attempt %d failed: %s", attempt + 1, exc)
                last = exc
                continue
            if data.get("request_id", rid) != rid:
                last = TransportError("response correlates to a different request")
                continue
            return Completion(
                text=data.get("text", ""),
                token_logprobs=tuple(data.get("token_logprobs") or ()),
                top_logprobs=tuple(data.get("top_logprobs") or ()),
                text_offset=tuple(data.get("text_offset") or ()),
            )
        raise TransportError(f"completion failed after {self.retries + 1} attempts: {last}")

    # prompt assembly
    def _prompt(self, ctx: GenerationContext, tail: str = "") -> str:
        return f"/*Query:*/ {ctx.query}\n\n/*Output:*/ {render_trail(ctx, self.graph)}{tail}"

    def _label(self, node) -> str:
        if self.graph is not None and not isinstance(node, (str, RelationRef)):
            return self.graph.label(node)
        return candidate_key(node) if not isinstance(node, EntityRef) else node.label

    def _block(self, ctx: GenerationContext) -> str:
        marker = "@[Retrieve Entity]@" if ctx.relation is not None else "@[Retrieve Relation]@"
        return f"{marker}{{<paragraph>{';'.join(ctx.knowledge)}</paragraph>}}"

    def predict_retrieval(self, ctx: GenerationContext) -> TokenDistribution:
        tail = ""
        if ctx.relation is not None:
            tail = f"@[Retrieve Relation]@{{<paragraph>{ctx.relation.dotted}</paragraph>}}{ctx.relation.dotted}+[Fully Relevant]+"
        return distribution_from_alternatives(self.complete(self._prompt(ctx, tail), 4), Family.RETRIEVAL)

    def hypo_relations(self, ctx: GenerationContext, n: int) -> list[RelationHypothesis]:
        _require_n(n)
        comp = self.complete(self._prompt(ctx, "@[Retrieve Relation]@{<paragraph>"), 64)
        body = comp.text.split("</paragraph>")[0]
        out = []
        for item in body.split(";"):
            item = item.strip()
            if item and not any(c.isspace() for c in item):
                out.append(RelationHypothesis(item, ctx.depth))
        return out[:n]

    def predict_relevance(self, ctx: GenerationContext, candidate) -> TokenDistribution:
        prompt = self._prompt(ctx, self._block(ctx) + self._label(candidate))
        return distribution_from_alternatives(self.complete(prompt, 4), Family.RELEVANCE)

    def predict_rationality(self, ctx: GenerationContext) -> TokenDistribution:
        _require_hops(ctx.trail)
        return distribution_from_alternatives(self.complete(self._prompt(ctx), 4), Family.RATIONALITY)

    def predict_utility(self, ctx: GenerationContext, answers: Sequence[NodeValue]) -> TokenDistribution:
        text = ";".join(self._label(a) for a in answers)
        prompt = self._prompt(ctx, f"@[No Retrieval]@Answer: {text}")
        return distribution_from_alternatives(self.complete(prompt, 4), Family.UTILITY)

    def sequence_logprobs(self, ctx: GenerationContext, segment: str) -> list[float]:
        prefix = self._prompt(ctx)
        comp = self.complete(prefix + segment, 0, echo=True)
        if not comp.text_offset:
            return list(comp.token_logprobs[-1:])
        return [lp for off, lp in zip(comp.text_offset, comp.token_logprobs)
                if off >= len(prefix) and lp is not None]

    # critic
    def _verdicts(self, text: str, family: Family) -> list[CriticVerdict]:
        out = []
        for line in text.splitlines() or [text]:
            for m in re.finditer(r"\[([^\[\]]+)\]", line):
                try:
                    cat = parse_token(m.group(0))
                except DomainError:
                    continue
                if cat.family == family:
                    out.append(CriticVerdict(cat, line[m.end():].strip()))
                    break
        return out

    def critic_relevance(self, query: str, history: str, candidates: Sequence[str],
                         kind: str) -> list[CriticVerdict]:
        if not candidates:
            raise ValueError("critic_relevance needs at least one candidate")
        head = RELATION_CRITIC_PROMPT if kind == "relation" else ENTITY_CRITIC_PROMPT
        evidence = "\n".join(candidates)
        prompt = f"{head}\n\nQuery: {query}\nPreceding: {history}\nEvidence:\n{evidence}\n\nRatings:\n"
        verdicts = self._verdicts(self.complete(prompt, 64 * len(candidates)).text, Family.RELEVANCE)
        if len(verdicts) != len(candidates):
            raise TransportError(f"critic rated {len(verdicts)} of {len(candidates)} candidates")
        return verdicts

    def critic_rationality(self, query: str, path: Trail) -> CriticVerdict:
        _require_hops(path)
        prompt = f"{RATIONALITY_CRITIC_PROMPT}\n\nQuery: {query}\nReasoning path: {path.render(self.graph)}\n\nRating:"
        verdicts = self._verdicts(self.complete(prompt, 128).text, Family.RATIONALITY)
        if not verdicts:
            raise TransportError("critic returned no rationality token")
        return verdicts[0]

    def critic_utility(self, query: str, answers: Sequence[str]) -> CriticVerdict:
        prompt = f"{UTILITY_CRITIC_PROMPT}\n\nQuery: {query}\nAnswers: {', '.join(answers)}\n\nRating:"
        verdicts = self._verdicts(self.complete(prompt, 128).text, Family.UTILITY)
        if not verdicts:
            raise TransportError("critic returned no utility token")
        return verdicts[0]


def legal_choice(dist: TokenDistribution, allowed: Sequence) -> Any:
    """Greedy choice restricted to ``allowed`` categories; falls back to the first allowed."""
    sub = dist.restricted(allowed)
    return sub.argmax() if sub is not None else allowed[0]

