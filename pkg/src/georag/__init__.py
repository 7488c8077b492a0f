"""Dimension-aware retrieval-augmented question answering for geography."""

from .classify import (DEFAULT_CLASSIFIER_THRESHOLDS, Dimension, DimensionLabels,
                       DimensionProbs, LexicalClassifier, Route, assign_labels, route)
from .corpus import (Chunk, CleanDocument, CleaningPolicy, DedupConfig, RawDocument,
                     Rejection, chunk_document, clean_document, dedup_corpus,
                     estimate_jaccard, minhash_signature, shingle)
from .errors import (ConfigurationError, GeoragError, MissingArtifactError,
                     ProtocolError, SchemaError, TransportError)
from .evaluate import (DEFAULT_RELEVANCE_THRESHOLDS, DimensionWeights, RelevanceVector,
                       ThresholdVector, aggregate, passes_thresholds)
from .index import (ExpansionMode, RetrievalHit, ThemeGraph, VectorIndex,
                    cosine_similarity, expand_retrieval)
from .metrics import (BenchItem, ConfusionCounts, OpenGenCase, answer_relevancy,
                      confusion_metrics, context_entity_recall, faithfulness,
                      load_benchmark, run_benchmark)
from .modelgw import BackendConfig, Gateway, GenerationRequest, StubScript
from .pipeline import (AnswerRecord, EngineDeps, PipelineConfig, QueryTrace, answer,
                       expand_query, iterative_retrieve, rank_candidates)
from .prompt import (DomainContext, EvidenceItem, GenerationParams, GeoPrompt,
                     TemperatureSchedule, build_geoprompt, temperature_for)
from .config import EngineConfig

__version__ = "0.1.0"

__all__ = [
    "AnswerRecord", "BackendConfig", "BenchItem", "Chunk", "CleanDocument",
    "CleaningPolicy", "ConfigurationError", "ConfusionCounts", "DedupConfig",
    "DEFAULT_CLASSIFIER_THRESHOLDS", "DEFAULT_RELEVANCE_THRESHOLDS", "Dimension",
    "DimensionLabels", "DimensionProbs", "DimensionWeights", "DomainContext",
    "EngineConfig", "EngineDeps", "EvidenceItem", "ExpansionMode", "Gateway",
    "GenerationParams", "GenerationRequest", "GeoPrompt", "GeoragError",
    "LexicalClassifier", "MissingArtifactError", "OpenGenCase", "PipelineConfig",
    "ProtocolError", "QueryTrace", "RawDocument", "Rejection", "RelevanceVector",
    "RetrievalHit", "Route", "SchemaError", "StubScript", "TemperatureSchedule",
    "ThemeGraph", "ThresholdVector", "TransportError", "VectorIndex",
    "aggregate", "answer", "answer_relevancy", "assign_labels", "build_geoprompt",
    "chunk_document", "clean_document", "confusion_metrics", "context_entity_recall",
    "cosine_similarity", "dedup_corpus", "estimate_jaccard", "expand_query",
    "expand_retrieval", "faithfulness", "iterative_retrieve", "load_benchmark",
    "minhash_signature", "passes_thresholds", "rank_candidates", "route",
    "run_benchmark", "shingle", "temperature_for",
]
