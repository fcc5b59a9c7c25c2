"""Knowledge-graph question answering steered by reflection tokens."""

from .bench import DatasetError, MetricsReport, QaExample, f1, hit_at_1, load_dataset, run_eval
from .engine import (
    AnswerSet,
    BeamConfig,
    NoAnswerError,
    ReasoningTree,
    answer_question,
    beam_select,
    expand_node,
    finalize_answers,
    run_inference,
    trace_to_dot,
    tree_to_trace,
)
from .estimator import KGReasoner, ReflectionDataForge
from .forge import (
    AnnotatedPath,
    AnswerBlock,
    Forge,
    KnowledgeBlock,
    ParseError,
    RationalityMark,
    RelevanceMark,
    RetrievalMarker,
    SerializationError,
    TrainingSample,
    forge_sample,
    parse,
    serialize,
)
from .gateway import CompletionGateway, GenerationContext, MockGateway, Trail, TransportError
from .kg import (
    EntityRef,
    GraphLoadError,
    KnowledgeGraph,
    Literal,
    ReasoningPath,
    RelationRef,
    Triple,
    UnknownTopicError,
    enumerate_paths,
    load_graph,
    shortest_paths,
)
from .retrieval import LexicalProvider, StaticEmbeddingProvider, retrieve_entities, retrieve_relations
from .scoring import (
    DomainError,
    NodeScores,
    Rationality,
    Relevance,
    Retrieval,
    ScoreConfig,
    TokenDistribution,
    Utility,
    node_score,
    path_final_score,
    rationality_score,
    relevance_score,
    token_score,
    utility_score,
)

__all__ = [
    "AnnotatedPath",
    "answer_question",
    "AnswerBlock",
    "AnswerSet",
    "beam_select",
    "BeamConfig",
    "CompletionGateway",
    "DatasetError",
    "DomainError",
    "EntityRef",
    "enumerate_paths",
    "expand_node",
    "f1",
    "finalize_answers",
    "Forge",
    "forge_sample",
    "GenerationContext",
    "GraphLoadError",
    "hit_at_1",
    "KGReasoner",
    "KnowledgeBlock",
    "KnowledgeGraph",
    "LexicalProvider",
    "Literal",
    "load_dataset",
    "load_graph",
    "MetricsReport",
    "MockGateway",
    "NoAnswerError",
    "node_score",
    "NodeScores",
    "parse",
    "ParseError",
    "path_final_score",
    "QaExample",
    "Rationality",
    "rationality_score",
    "RationalityMark",
    "ReasoningPath",
    "ReasoningTree",
    "ReflectionDataForge",
    "RelationRef",
    "Relevance",
    "relevance_score",
    "RelevanceMark",
    "Retrieval",
    "RetrievalMarker",
    "retrieve_entities",
    "retrieve_relations",
    "run_eval",
    "run_inference",
    "ScoreConfig",
    "SerializationError",
    "serialize",
    "shortest_paths",
    "StaticEmbeddingProvider",
    "token_score",
    "TokenDistribution",
    "trace_to_dot",
    "Trail",
    "TrainingSample",
    "TransportError",
    "tree_to_trace",
    "Triple",
    "UnknownTopicError",
    "Utility",
    "utility_score",
]

__version__ = "0.1.0"
