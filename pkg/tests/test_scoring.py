import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from reflectkg.scoring import (
    DomainError,
    Family,
    NodeScores,
    Rationality,
    Relevance,
    Retrieval,
    ScoreConfig,
    TokenDistribution,
    Utility,
    categories,
    node_score,
    parse_token,
    path_final_score,
    rationality_score,
    relevance_score,
    token_score,
    utility_score,
)

from helpers import graded_oracle, softmax_oracle, utility_oracle

finite = st.floats(min_value=-30, max_value=5, allow_nan=False)


def dist(family, **by_value):
    return TokenDistribution(family, by_value)


def test_single_entry_softmax():
    assert token_score(TokenDistribution.point(Relevance.PARTIALLY), Relevance.PARTIALLY) == 1.0


def test_equal_logprobs():
    d = TokenDistribution(Family.RELEVANCE, {c: -0.7 for c in Relevance})
    for c in Relevance:
        assert token_score(d, c) == pytest.approx(1 / 3, abs=1e-15)


def test_known_softmax():
    d = TokenDistribution(Family.RELEVANCE, {Relevance.FULLY: -1, Relevance.PARTIALLY: -2,
                                             Relevance.UNRELEVANT: -3})
    got = [token_score(d, c) for c in Relevance]
    for g, want in zip(got, (0.6652, 0.2447, 0.0900)):
        assert abs(g - want) < 5e-5
    assert relevance_score(d) == pytest.approx(0.7876, abs=5e-5)


def test_token_missing_from_distribution():
    d = TokenDistribution.point(Relevance.FULLY)
    with pytest.raises(DomainError):
        token_score(d, Relevance.PARTIALLY)
    with pytest.raises(DomainError):
        token_score(d, Rationality.FULLY)


def test_distribution_validation():
    with pytest.raises(DomainError):
        TokenDistribution(Family.RELEVANCE, {})
    with pytest.raises(DomainError):
        TokenDistribution(Family.RELEVANCE, {Relevance.FULLY: float("nan")})
    with pytest.raises(DomainError):
        TokenDistribution(Family.RELEVANCE, {Rationality.FULLY: 0.0})
    with pytest.raises(DomainError):
        TokenDistribution(Family.RELEVANCE, {Relevance.FULLY: 0.0, "[Fully Relevant]": 1.0})


def test_relevance_extremes():
    assert relevance_score(TokenDistribution.point(Relevance.FULLY)) == 1.0
    assert relevance_score(TokenDistribution.point(Relevance.UNRELEVANT)) == 0.0
    with pytest.raises(DomainError):
        relevance_score(TokenDistribution.point(Rationality.FULLY))


def test_rationality_cases():
    assert rationality_score(TokenDistribution.point(Rationality.FULLY)) == 1.0
    assert rationality_score(TokenDistribution.point(Rationality.UNREASONABLE)) == 0.0
    assert rationality_score(TokenDistribution.uniform(Family.RATIONALITY)) == pytest.approx(0.5, abs=1e-15)


def test_utility_cases():
    lp = {Utility.of(i): -i * 0.37 for i in range(1, 6)}
    assert utility_score(TokenDistribution(Family.UTILITY, lp)) == pytest.approx(1.0, abs=1e-12)
    assert utility_score(TokenDistribution.point(Utility.U5)) == 1.0
    assert utility_score(TokenDistribution.uniform(Family.UTILITY), "expected_value") == pytest.approx(0.6)
    with pytest.raises(ValueError):
        utility_score(TokenDistribution.point(Utility.U5), "median")


def test_node_score_examples():
    assert node_score(0, 0, 0, 0) == 0
    assert node_score(-0.5, 0.7876, 0.8, 0) == pytest.approx(0.13008, abs=1e-12)
    assert node_score(0, 1, 1, 1, ScoreConfig(k1=1, k2=0.5)) == 1.5


def test_path_final_score_examples():
    assert path_final_score([0.13008]) == 0.13008
    assert path_final_score([0.13008, 0.2]) == pytest.approx(0.33008, abs=1e-12)
    assert path_final_score([0.0, 0.0]) == 0
    assert path_final_score([0.2, 0.4], "mean") == pytest.approx(0.3)
    assert path_final_score([0.5, 0.4], "product") == pytest.approx(0.2)
    with pytest.raises(ValueError):
        path_final_score([])


def test_node_scores_range_check():
    with pytest.raises(ValueError):
        NodeScores.compute(0.0, 1.2, 0.5, 0.0)
    s = NodeScores.compute(-0.2, 0.5, 0.5, 1.0)
    assert s.total == pytest.approx(-0.2 + 0.25 + 0.5)


def test_score_config_validation():
    with pytest.raises(ValueError):
        ScoreConfig(k1=-1)
    with pytest.raises(ValueError):
        ScoreConfig(utility_mode="bogus")
    with pytest.raises(ValueError):
        ScoreConfig(aggregate="max")


@pytest.mark.parametrize("text,expected", [
    ("[Fully Relevant]", Relevance.FULLY),
    ("Unrelevant", Relevance.UNRELEVANT),
    ("[Irrelevant]", Relevance.UNRELEVANT),
    ("[UnReasonable]", Rationality.UNREASONABLE),
    ("[Retrieve Relation]", Retrieval.RELATION),
    ("[Entity Retrieval]", Retrieval.ENTITY),
    ("[Utility:4]", Utility.U4),
])
def test_parse_token(text, expected):
    assert parse_token(text) is expected


def test_parse_token_unknown():
    with pytest.raises(DomainError):
        parse_token("[Somewhat Relevant]")


def test_argmax_tie_goes_to_canonical_first():
    assert TokenDistribution.uniform(Family.RETRIEVAL).argmax() is Retrieval.RELATION
    d = TokenDistribution(Family.RELEVANCE, {Relevance.UNRELEVANT: 0.0, Relevance.PARTIALLY: 0.0})
    assert d.argmax() is Relevance.PARTIALLY


def test_json_round_trip():
    d = TokenDistribution(Family.UTILITY, {Utility.U2: -0.1, Utility.U5: -3.0})
    assert TokenDistribution.from_json(Family.UTILITY, d.to_json()) == d


def _random_dist(rng, family):
    cats = categories(family)
    chosen = rng.sample(cats, rng.randint(1, len(cats)))
    return {c.value: rng.uniform(-12, 2) for c in chosen}


def test_random_distributions_match_oracle():
    rng = random.Random(7)
    for _ in range(100):
        for family, fn, full, partial in (
                (Family.RELEVANCE, relevance_score, "Fully Relevant", "Partially Relevant"),
                (Family.RATIONALITY, rationality_score, "Fully Reasonable", "Partially Reasonable")):
            lp = _random_dist(rng, family)
            d = TokenDistribution.from_json(family, lp)
            assert abs(fn(d) - graded_oracle(lp, full, partial)) < 1e-9
            names = list(lp)
            probs = softmax_oracle([lp[n] for n in names])
            for n, p in zip(names, probs):
                assert abs(token_score(d, n) - p) < 1e-9
        ulp = _random_dist(rng, Family.UTILITY)
        ud = TokenDistribution.from_json(Family.UTILITY, ulp)
        for mode in ("as_written", "expected_value"):
            assert abs(utility_score(ud, mode) - utility_oracle(ulp, mode)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=3, max_size=3))
def test_softmax_is_normalized_and_ordered(lps):
    d = TokenDistribution(Family.RELEVANCE, dict(zip(Relevance, lps)))
    probs = [token_score(d, c) for c in Relevance]
    assert math.isclose(math.fsum(probs), 1.0, abs_tol=1e-12)
    assert all(0.0 <= p <= 1.0 for p in probs)
    order = sorted(range(3), key=lambda i: lps[i])
    assert [probs[i] for i in order] == sorted(probs)
    assert 0.0 <= relevance_score(d) <= 1.0


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=5, unique=True), st.floats(-5, 5))
def test_shift_invariance(lps, shift):
    cats = list(Utility)[: len(lps)]
    a = TokenDistribution(Family.UTILITY, dict(zip(cats, lps)))
    b = TokenDistribution(Family.UTILITY, {c: v + shift for c, v in zip(cats, lps)})
    for c in cats:
        assert math.isclose(token_score(a, c), token_score(b, c), abs_tol=1e-9)
    # the as-written utility is identically one under the present-only softmax
    assert math.isclose(utility_score(a), 1.0, abs_tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 0), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_node_score_monotone(seq, rel, rat, uti, drel, duti):
    cfg = ScoreConfig()
    base = node_score(seq, rel, rat, uti, cfg)
    assert node_score(seq, min(1.0, rel + drel), rat, uti, cfg) >= base - 1e-12
    assert node_score(seq, rel, rat, min(1.0, uti + duti), cfg) >= base - 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(0.0, 5.0))
def test_sum_aggregate_grows_with_positive_node(scores, extra):
    assert path_final_score(scores + [extra]) >= path_final_score(scores) - 1e-12
