import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from reflectkg import KGReasoner, ReflectionDataForge
from reflectkg.bench import load_dataset
from reflectkg.forge import parse
from reflectkg.gateway import MockGateway
from reflectkg.kg import load_graph

from helpers import DESK_KG, DESK_MOCK, DESK_NAMES, DESK_QUESTIONS


@pytest.fixture(scope="module")
def mock():
    return MockGateway.from_file(DESK_MOCK)


@pytest.fixture(scope="module")
def suite():
    return load_dataset(DESK_QUESTIONS)


def test_params_round_trip(mock):
    est = KGReasoner(gateway=mock, beam_width=2)
    params = est.get_params()
    assert params["beam_width"] == 2 and params["mode"] == "beam"
    est.set_params(max_depth=3, mode="exhausted")
    twin = clone(est)
    assert twin.get_params()["max_depth"] == 3 and isinstance(twin.gateway, MockGateway)
    assert not hasattr(twin, "graph_")


def test_not_fitted(mock):
    with pytest.raises(NotFittedError):
        KGReasoner(gateway=mock).predict([("q", "m.09c7w0")])
    with pytest.raises(NotFittedError):
        ReflectionDataForge(critic=mock).transform([])


def test_fit_validation(mock):
    with pytest.raises(ValueError):
        KGReasoner().fit(str(DESK_KG))
    with pytest.raises(ValueError):
        KGReasoner(gateway=mock, beam_width=0).fit(str(DESK_KG))
    with pytest.raises(ValueError):
        ReflectionDataForge(critic=mock, top_k=0).fit(str(DESK_KG))


def test_fit_predict_score(mock, suite):
    est = KGReasoner(gateway=mock, mode="exhausted").fit(str(DESK_KG), names=str(DESK_NAMES))
    pred = est.predict(suite[:2])
    assert pred[0] == frozenset({"m.0d060g", "m.0b90_r"})
    assert pred[1] == frozenset({"m.0fthf", "m.0dl6qm"})
    assert est.score(suite) == 1.0
    assert est.score(suite[:1], [["m.nowhere"]]) == 0.0
    with pytest.raises(ValueError):
        est.score(suite[:2], [["x"]])


def test_fit_accepts_graph_and_triples(mock):
    g = load_graph(DESK_KG, DESK_NAMES)
    est = KGReasoner(gateway=mock).fit(g)
    assert est.graph_ is g
    tiny = KGReasoner(gateway=mock).fit([("m.a", "r.x", "m.b")])
    assert tiny.predict([("q", "m.a")]) in ([frozenset()], [frozenset({"m.b"})])


def test_forge_transform(mock, suite):
    forge = ReflectionDataForge(critic=mock).fit(str(DESK_KG), names=str(DESK_NAMES))
    samples = forge.transform(suite)
    assert len(samples) >= len(suite)
    assert all(parse(s.output) for s in samples)
    assert forge.report_.questions == len(suite)
    with pytest.raises(ValueError):
        forge.transform([("q", "m.09c7w0")])
