"""Acceptance gate: one PASS/FAIL line per criterion, printed past pytest's capture."""

import contextlib
import random
import time

import pytest

from reflectkg.bench import f1, hit_at_1, load_dataset, run_eval
from reflectkg.engine import PRUNED, BeamConfig, NoAnswerError, ReasoningTree, answer_question, expand_node
from reflectkg.forge import AnswerBlock, RationalityMark, forge_sample, parse, serialize
from reflectkg.gateway import MockGateway
from reflectkg.kg import (
    EntityRef,
    KnowledgeGraph,
    Literal,
    RelationRef,
    Triple,
    enumerate_paths,
    load_graph,
    parse_node,
    shortest_paths,
)
from reflectkg.retrieval import StaticEmbeddingProvider
from reflectkg.scoring import (
    Family,
    Rationality,
    Relevance,
    ScoreConfig,
    TokenDistribution,
    Utility,
    categories,
    node_score,
    rationality_score,
    relevance_score,
    token_score,
    utility_score,
)

from helpers import (
    DESK_KG,
    DESK_MOCK,
    DESK_NAMES,
    DESK_QUESTIONS,
    EARLY_STOP,
    MLK_EMBEDDINGS,
    MLK_QUERY,
    MLK_SAMPLE,
    brute_force_paths,
    flat,
    graded_oracle,
    node_oracle,
    random_annotated_path,
    random_set_pairs,
    random_triples,
    set_metrics_oracle,
    shortest_oracle,
    softmax_oracle,
    utility_oracle,
)

CHAGALL_GOLD = "visual_art.visual_artist.associated_periods_or_movements"


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(number, title, budget=None):
        start = time.perf_counter()
        ok = False
        try:
            yield
            elapsed = time.perf_counter() - start
            assert budget is None or elapsed < budget, f"took {elapsed:.2f}s, budget {budget}s"
            ok = True
        finally:
            with capsys.disabled():
                print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {title}")
    return run


@pytest.fixture(scope="module")
def desk():
    return load_graph(DESK_KG, DESK_NAMES)


@pytest.fixture(scope="module")
def mock():
    return MockGateway.from_file(DESK_MOCK)


@pytest.fixture(scope="module")
def suite():
    return load_dataset(DESK_QUESTIONS)


def _random_logprobs(rng, family):
    cats = categories(family)
    return {c.value: rng.uniform(-12, 2) for c in rng.sample(cats, rng.randint(1, len(cats)))}


def test_c1_scoring_oracle(criterion):
    with criterion(1, "scoring matches the independent re-implementation", budget=1.0):
        rng = random.Random(2024)
        for _ in range(100):
            rel_lp = _random_logprobs(rng, Family.RELEVANCE)
            rat_lp = _random_logprobs(rng, Family.RATIONALITY)
            uti_lp = _random_logprobs(rng, Family.UTILITY)
            rel = TokenDistribution.from_json(Family.RELEVANCE, rel_lp)
            rat = TokenDistribution.from_json(Family.RATIONALITY, rat_lp)
            uti = TokenDistribution.from_json(Family.UTILITY, uti_lp)
            for lp, d in ((rel_lp, rel), (rat_lp, rat), (uti_lp, uti)):
                names = list(lp)
                for n, p in zip(names, softmax_oracle([lp[k] for k in names])):
                    assert abs(token_score(d, n) - p) < 1e-9
            want_rel = graded_oracle(rel_lp, "Fully Relevant", "Partially Relevant")
            want_rat = graded_oracle(rat_lp, "Fully Reasonable", "Partially Reasonable")
            assert abs(relevance_score(rel) - want_rel) < 1e-9
            assert abs(rationality_score(rat) - want_rat) < 1e-9
            for mode in ("as_written", "expected_value"):
                want_uti = utility_oracle(uti_lp, mode)
                assert abs(utility_score(uti, mode) - want_uti) < 1e-9
                seq = rng.uniform(-5, 0)
                got = node_score(seq, relevance_score(rel), rationality_score(rat), utility_score(uti, mode))
                assert abs(got - node_oracle(seq, want_rel, want_rat, want_uti)) < 1e-9
        d = TokenDistribution(Family.RELEVANCE, {Relevance.FULLY: -1, Relevance.PARTIALLY: -2,
                                                 Relevance.UNRELEVANT: -3})
        for c, want in zip(Relevance, (0.6652, 0.2447, 0.0900)):
            assert abs(token_score(d, c) - want) < 5e-5


def test_c2_constants(criterion):
    with criterion(2, "weighting constants and as-written utility"):
        cfg = ScoreConfig(k1=1, k2=0.5)
        assert node_score(0, 1, 1, 1, cfg) == 1.5
        assert node_score(0, 1, 1, 1) == 1.5
        every = TokenDistribution(Family.UTILITY, {u: -float(i) for i, u in enumerate(Utility)})
        assert abs(utility_score(every, "as_written") - 1.0) < 1e-12


def test_c3_bit_exact_format(criterion):
    with criterion(3, "sample string round-trips byte-for-byte", budget=1.0):
        assert serialize(parse(MLK_SAMPLE)).encode() == MLK_SAMPLE.encode()
        rng = random.Random(3)
        for _ in range(100):
            path = random_annotated_path(rng)
            text = serialize(path)
            assert parse(text) == path
            assert serialize(parse(text)) == text


def _graph(rows):
    return KnowledgeGraph([Triple(EntityRef(s), RelationRef.parse(r), parse_node(o)) for s, r, o in rows])


def test_c4_graph_oracles(criterion):
    with criterion(4, "path enumeration equals brute-force DFS", budget=5.0):
        rng = random.Random(4)
        checked = 0
        for _ in range(25):
            n = rng.randint(2, 12)
            rows = random_triples(rng, n, rng.randint(n, 3 * n))
            g = _graph(rows)
            topics = sorted({s for s, _, _ in rows})
            topic = rng.choice(topics)
            for answer in [f"n{i}" for i in range(n)] + ["lit:7"]:
                target = Literal("7") if answer == "lit:7" else EntityRef(answer)
                for depth in (1, 2, 3, 4):
                    got = {flat(p) for p in enumerate_paths(g, EntityRef(topic), target, depth)}
                    assert got == brute_force_paths(rows, topic, answer, depth)
                    short = {flat(p) for p in shortest_paths(g, EntityRef(topic), target, depth)}
                    assert short == shortest_oracle(rows, topic, answer, depth)
                    checked += bool(got)
        assert checked > 0


def _trees(q, desk, mock, cfg):
    try:
        return answer_question(q.question, q.topics, desk, cfg, mock)[0]
    except NoAnswerError as exc:
        return exc.trees


def test_c5_pruning_soundness(criterion, desk, mock, suite):
    with criterion(5, "pruned nodes are leaves with an undesirable token"):
        n_pruned = 0
        for cfg in (BeamConfig(mode="exhausted"), BeamConfig(beam_width=1), BeamConfig(beam_width=3)):
            for q in suite:
                for tree in _trees(q, desk, mock, cfg):
                    pruned = {n.id for n in tree.nodes if n.status == PRUNED}
                    n_pruned += len(pruned)
                    assert not any(n.parent in pruned for n in tree.nodes)
                    for nid in pruned:
                        node = tree.nodes[nid]
                        assert not node.children
                        assert node.prune_reason in (Relevance.UNRELEVANT, Rationality.UNREASONABLE)
        assert n_pruned > 0
        q = next(q for q in suite if q.id == "ferguson")
        marriage = next(t for t in _trees(q, desk, mock, BeamConfig()) if t.topic.id == "m.04ztj")
        [cut] = [n for n in marriage.nodes if n.status == PRUNED]
        assert cut.depth == 1 and cut.prune_reason is Rationality.UNREASONABLE
        assert not marriage.answer_leaves()


def test_c6_beam_subsumption_monotonicity(criterion, desk, mock, suite):
    with criterion(6, "beam leaves within exhausted, Hit@1 non-decreasing in width", budget=10.0):
        full = {q.id: {a.key for t in _trees(q, desk, mock, BeamConfig(mode="exhausted"))
                       for a in t.answer_leaves()} for q in suite}
        for width in (1, 2, 3):
            for q in suite:
                leaves = {a.key for t in _trees(q, desk, mock, BeamConfig(beam_width=width)) for a in t.answer_leaves()}
                assert leaves <= full[q.id]
        hits = [run_eval(suite, desk, BeamConfig(beam_width=w), mock).hit_at_1 for w in (1, 2, 3)]
        assert hits == sorted(hits)
        assert hits[0] < hits[-1]
        assert run_eval(suite, desk, BeamConfig(mode="exhausted"), mock).hit_at_1 == 1.0


def test_c7_hypotheses_bridge_vocabulary(criterion, desk, mock, suite):
    with criterion(7, "gold relation reaches top-5 only with hypotheses"):
        q = next(q for q in suite if q.id == "chagall")
        topic = desk.entity(q.topics[0])

        def candidates(use):
            tree = ReasoningTree(q.question, topic)
            cfg = BeamConfig(top_k=5, use_hypotheses=use)
            return {d.relation.dotted for d in expand_node(tree.root, q.question, desk, cfg, mock)}

        assert CHAGALL_GOLD in candidates(True)
        assert CHAGALL_GOLD not in candidates(False)


def test_c8_worker_determinism(criterion, desk, mock, suite):
    with criterion(8, "1 and 8 workers give byte-identical reports"):
        one = run_eval(suite, desk, BeamConfig(workers=1), mock, workers=1).dumps()
        eight = run_eval(suite, desk, BeamConfig(workers=8), mock, workers=8).dumps()
        assert one.encode() == eight.encode()


def test_c9_forge_fidelity(criterion, desk, mock):
    with criterion(9, "forged sample and early stop"):
        prov = StaticEmbeddingProvider.from_file(MLK_EMBEDDINGS)
        [s] = forge_sample(MLK_QUERY, "m.051cc", ["m.0fthf", "m.0dl6qm"], desk, mock, top_k=5, provider=prov)
        assert s.output == MLK_SAMPLE
        [ex] = load_dataset(EARLY_STOP)
        [early] = forge_sample(ex.question, ex.topics[0], list(ex.answers), desk, mock)
        p = parse(early.output)
        assert p.n_hops == 1
        assert p.segments[-2] == RationalityMark(Rationality.UNREASONABLE)
        assert isinstance(p.segments[-1], AnswerBlock)


def test_c10_metrics(criterion):
    with criterion(10, "Hit@1 and F1 match the independent metric script"):
        for pred, gold in random_set_pairs(10, 50):
            h, f = set_metrics_oracle(pred, gold)
            assert hit_at_1(pred, gold) == h
            assert abs(f1(pred, gold) - f) < 1e-12
