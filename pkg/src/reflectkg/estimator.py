"""scikit-learn style wrappers around the engine and the forge."""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bench import QaExample, evaluate_example, MetricsReport
from .engine import BeamConfig, NoAnswerError, answer_question
from .forge import Forge, ForgeReport, forge_corpus
from .kg import node_key
from .scoring import ScoreConfig
from .validation import check_graph, check_positive_int, check_questions


class KGReasoner(BaseEstimator):
    """Question answering over a knowledge graph.

    ``fit`` takes the graph (object, triple-file path or triples);
    ``predict`` takes questions and returns the rank-1 answer set of each
    as a frozenset of node keys (empty when nothing was found).
    """

    def __init__(self, gateway=None, beam_width=3, max_depth=2, top_k=5, k1=1.0, k2=0.5, mode="beam",
                 utility_mode="as_written", aggregate="sum", n_hypotheses=3, use_hypotheses=True,
                 provider=None, workers=1):
        self.gateway = gateway
        self.beam_width = beam_width
        self.max_depth = max_depth
        self.top_k = top_k
        self.k1 = k1
        self.k2 = k2
        self.mode = mode
        self.utility_mode = utility_mode
        self.aggregate = aggregate
        self.n_hypotheses = n_hypotheses
        self.use_hypotheses = use_hypotheses
        self.provider = provider
        self.workers = workers

    def _config(self) -> BeamConfig:
        return BeamConfig(
            beam_width=check_positive_int("beam_width", self.beam_width),
            max_depth=check_positive_int("max_depth", self.max_depth),
            top_k=check_positive_int("top_k", self.top_k),
            scores=ScoreConfig(self.k1, self.k2, utility_mode=self.utility_mode, aggregate=self.aggregate),
            mode=self.mode, n_hypotheses=self.n_hypotheses, use_hypotheses=self.use_hypotheses,
            workers=check_positive_int("workers", self.workers))

    def fit(self, X, y=None, names=None):
        if self.gateway is None:
            raise ValueError("KGReasoner needs a gateway")
        self.config_ = self._config()
        self.graph_ = check_graph(X, names)
        return self

    def predict_ranked(self, X):
        check_is_fitted(self, "graph_")
        out = []
        for ex in check_questions(X):
            try:
                _, ranked = answer_question(ex.question, ex.topics, self.graph_, self.config_,
                                            self.gateway, self.provider)
            except NoAnswerError:
                ranked = []
            out.append(ranked)
        return out

    def predict(self, X):
        return [frozenset(node_key(a) for a in r[0].answers) if r else frozenset()
                for r in self.predict_ranked(X)]

    def evaluate(self, X) -> MetricsReport:
        check_is_fitted(self, "graph_")
        rows = [evaluate_example(ex, self.graph_, self.config_, self.gateway, self.provider)
                for ex in check_questions(X)]
        return MetricsReport.from_rows(rows)

    def score(self, X, y=None):
        """Mean Hit@1; gold answers come from ``y`` when given, else from the examples."""
        examples = check_questions(X)
        if y is not None:
            if len(y) != len(examples):
                raise ValueError("X and y differ in length")
            examples = [QaExample(ex.id, ex.question, ex.topics, tuple(g)) for ex, g in zip(examples, y)]
        return self.evaluate(examples).hit_at_1


class ReflectionDataForge(BaseEstimator, TransformerMixin):
    """Turns labelled questions into annotated training samples.

    ``fit`` takes the graph; ``transform`` takes questions with gold answers
    and returns the list of samples. Skipped paths land in ``report_``.
    """

    def __init__(self, critic=None, top_k=5, max_path_depth=4, provider=None, workers=1):
        self.critic = critic
        self.top_k = top_k
        self.max_path_depth = max_path_depth
        self.provider = provider
        self.workers = workers

    def fit(self, X, y=None, names=None):
        if self.critic is None:
            raise ValueError("ReflectionDataForge needs a critic")
        check_positive_int("top_k", self.top_k)
        if self.max_path_depth < 0:
            raise ValueError("max_path_depth must be >= 0")
        self.graph_ = check_graph(X, names)
        self.forge_ = Forge(self.graph_, self.critic, self.top_k, self.max_path_depth, self.provider)
        self.report_ = ForgeReport()
        return self

    def transform(self, X):
        check_is_fitted(self, "forge_")
        examples = check_questions(X)
        if any(ex.answers == ("?",) for ex in examples):
            raise ValueError("forging needs gold answers for every question")
        samples, self.report_ = forge_corpus(self.forge_, examples, workers=self.workers)
        return samples
