"""Reflection tokens and the node/path scores built from their log-probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union


class DomainError(ValueError):
    """A scoring call was given a token or distribution of the wrong kind."""


class Family(str, Enum):
    RETRIEVAL = "Retrieval"
    RELEVANCE = "Relevance"
    RATIONALITY = "Rationality"
    UTILITY = "Utility"


class _Category(str, Enum):
    @property
    def surface(self) -> str:
        return f"[{self.value}]"

    @property
    def family(self) -> Family:
        return _FAMILY_OF[type(self)]

    def __str__(self) -> str:
        return self.surface


class Retrieval(_Category):
    RELATION = "Relation Retrieval"
    ENTITY = "Entity Retrieval"
    NO = "No Retrieval"


class Relevance(_Category):
    FULLY = "Fully Relevant"
    PARTIALLY = "Partially Relevant"
    UNRELEVANT = "Unrelevant"


class Rationality(_Category):
    FULLY = "Fully Reasonable"
    PARTIALLY = "Partially Reasonable"
    UNREASONABLE = "Unreasonable"


class Utility(_Category):
    U1 = "Utility:1"
    U2 = "Utility:2"
    U3 = "Utility:3"
    U4 = "Utility:4"
    U5 = "Utility:5"

    @property
    def level(self) -> int:
        return int(self.value.split(":")[1])

    @classmethod
    def of(cls, level: int) -> "Utility":
        return cls(f"Utility:{level}")


Category = Union[Retrieval, Relevance, Rationality, Utility]

_FAMILY_OF = {
    Retrieval: Family.RETRIEVAL,
    Relevance: Family.RELEVANCE,
    Rationality: Family.RATIONALITY,
    Utility: Family.UTILITY,
}
FAMILY_TYPES = {v: k for k, v in _FAMILY_OF.items()}

UNDESIRABLE = frozenset({Relevance.UNRELEVANT, Rationality.UNREASONABLE})

# Alternate spellings seen in the wild; parse-only.
_ALIASES = {
    "Retrieve Relation": Retrieval.RELATION,
    "Retrieve Entity": Retrieval.ENTITY,
    "Irrelevant": Relevance.UNRELEVANT,
    "UnReasonable": Rationality.UNREASONABLE,
}


def categories(family: Family) -> list[Category]:
    return list(FAMILY_TYPES[Family(family)])


def parse_token(text: str) -> Category:
    """Map a surface form such as ``[Fully Relevant]`` (brackets optional) to its category."""
    body = text.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    if body in _ALIASES:
        return _ALIASES[body]
    for kind in FAMILY_TYPES.values():
        try:
            return kind(body)
        except ValueError:
            continue
    raise DomainError(f"unknown reflection token {text!r}")


def coerce_category(value, family: Family | None = None) -> Category:
    if isinstance(value, _Category):
        cat = value
    elif isinstance(value, int) and not isinstance(value, bool):
        cat = Utility.of(value)
    else:
        cat = parse_token(str(value))
    if family is not None and cat.family != family:
        raise DomainError(f"{cat.surface} is not a {Family(family).value} token")
    return cat


@dataclass(frozen=True)
class TokenDistribution:
    """Log-probabilities over (a subset of) one token family's categories."""

    family: Family
    entries: Mapping[Category, float]

    def __post_init__(self):
        fam = Family(self.family)
        clean: dict[Category, float] = {}
        for key, lp in dict(self.entries).items():
            cat = coerce_category(key, fam)
            if cat in clean:
                raise DomainError(f"duplicate category {cat.surface}")
            lp = float(lp)
            if not math.isfinite(lp):
                raise DomainError(f"log-probability for {cat.surface} is not finite")
            clean[cat] = lp
        if not clean:
            raise DomainError("distribution needs at least one category")
        ordered = {c: clean[c] for c in categories(fam) if c in clean}
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "entries", ordered)

    @classmethod
    def uniform(cls, family: Family) -> "TokenDistribution":
        return cls(family, {c: 0.0 for c in categories(family)})

    @classmethod
    def point(cls, category) -> "TokenDistribution":
        cat = coerce_category(category)
        return cls(cat.family, {cat: 0.0})

    @property
    def size(self) -> int:
        return len(self.entries)

    def probabilities(self) -> dict[Category, float]:
        m = max(self.entries.values())
        exps = {c: math.exp(lp - m) for c, lp in self.entries.items()}
        z = math.fsum(exps.values())
        return {c: v / z for c, v in exps.items()}

    def argmax(self) -> Category:
        """Most likely category; ties go to the first in canonical order."""
        best = max(self.entries.values())
        return next(c for c, lp in self.entries.items() if lp == best)

    def restricted(self, allowed: Iterable[Category]) -> "TokenDistribution | None":
        keep = {c: lp for c, lp in self.entries.items() if c in set(allowed)}
        return TokenDistribution(self.family, keep) if keep else None

    def to_json(self) -> dict[str, float]:
        return {c.value: lp for c, lp in self.entries.items()}

    @classmethod
    def from_json(cls, family: Family, data: Mapping[str, float]) -> "TokenDistribution":
        return cls(family, {coerce_category(k, family): v for k, v in data.items()})


def token_score(dist: TokenDistribution, token) -> float:
    """Softmax probability of ``token`` over the categories present in ``dist``."""
    cat = coerce_category(token, dist.family)
    if cat not in dist.entries:
        raise DomainError(f"{cat.surface} not present in distribution")
    return dist.probabilities()[cat]


@dataclass(frozen=True)
class ScoreConfig:
    k1: float = 1.0
    k2: float = 0.5
    partial_weight: float = 0.5
    utility_mode: str = "as_written"
    aggregate: str = "sum"

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("k1 and k2 must be non-negative")
        if not 0.0 <= self.partial_weight <= 1.0:
            raise ValueError("partial_weight must lie in [0, 1]")
        if self.utility_mode not in ("as_written", "expected_value"):
            raise ValueError(f"unknown utility_mode {self.utility_mode!r}")
        if self.aggregate not in ("sum", "mean", "product"):
            raise ValueError(f"unknown aggregate {self.aggregate!r}")


DEFAULT_SCORE_CONFIG = ScoreConfig()


def _graded(dist: TokenDistribution, family: Family, full, partial, cfg: ScoreConfig) -> float:
    if dist.family != family:
        raise DomainError(f"expected a {family.value} distribution, got {dist.family.value}")
    p = dist.probabilities()
    return p.get(full, 0.0) + cfg.partial_weight * p.get(partial, 0.0)


def relevance_score(dist: TokenDistribution, cfg: ScoreConfig = DEFAULT_SCORE_CONFIG) -> float:
    return _graded(dist, Family.RELEVANCE, Relevance.FULLY, Relevance.PARTIALLY, cfg)


def rationality_score(dist: TokenDistribution, cfg: ScoreConfig = DEFAULT_SCORE_CONFIG) -> float:
    return _graded(dist, Family.RATIONALITY, Rationality.FULLY, Rationality.PARTIALLY, cfg)


def utility_score(dist: TokenDistribution, mode: str = "as_written") -> float:
    """Utility of an answer.

    ``as_written`` sums the softmax mass of every utility level present,
    which is exactly 1 whenever all five levels are reported.
    ``expected_value`` is the mean level divided by five.
    """
    if dist.family != Family.UTILITY:
        raise DomainError(f"expected a Utility distribution, got {dist.family.value}")
    p = dist.probabilities()
    if mode == "as_written":
        return math.fsum(p.values())
    if mode == "expected_value":
        return math.fsum(c.level * v for c, v in p.items()) / 5.0
    raise ValueError(f"unknown utility mode {mode!r}")


def node_score(seq: float, rel: float, rat: float, uti: float,
               cfg: ScoreConfig = DEFAULT_SCORE_CONFIG) -> float:
    return seq + cfg.k1 * rel * rat + cfg.k2 * uti


def path_final_score(scores: Sequence[float], aggregate: str = "sum") -> float:
    """Aggregate per-depth node scores along a root-to-leaf path."""
    if len(scores) == 0:
        raise ValueError("path has no scored nodes")
    if aggregate == "sum":
        return math.fsum(scores)
    if aggregate == "mean":
        return math.fsum(scores) / len(scores)
    if aggregate == "product":
        return math.prod(scores)
    raise ValueError(f"unknown aggregate {aggregate!r}")


@dataclass(frozen=True)
class NodeScores:
    seq: float = 0.0
    rel: float = 0.0
    rat: float = 0.0
    uti: float = 0.0
    total: float = field(default=0.0)

    @classmethod
    def compute(cls, seq: float = 0.0, rel: float = 0.0, rat: float = 0.0, uti: float = 0.0,
                cfg: ScoreConfig = DEFAULT_SCORE_CONFIG) -> "NodeScores":
        for name, v in (("rel", rel), ("rat", rat), ("uti", uti)):
            if not 0.0 <= v <= 1.0 + 1e-12:
                raise ValueError(f"{name}={v} outside [0, 1]")
        return cls(seq, rel, rat, uti, node_score(seq, rel, rat, uti, cfg))

    def to_json(self) -> dict[str, float]:
        return {"seq": self.seq, "rel": self.rel, "rat": self.rat, "uti": self.uti, "total": self.total}
