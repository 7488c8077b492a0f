"""Per-dimension relevance scoring, weighted aggregation, and threshold filters.

Every (question, document) pair scores on all seven dimensions in [-1, 1].
Scores aggregate to a scalar through a weight vector that sums to one, and
per-dimension thresholds decide which documents survive as evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .classify import NUM_DIMENSIONS, Dimension, DimensionLabels
from .corpus import Chunk
from .errors import ConfigurationError, ProtocolError, TransportError
from .index import cosine_similarity

# Fine-tuned per-dimension thresholds on the tanh output range, in taxonomy order.
DEFAULT_RELEVANCE_THRESHOLDS = (0.93, 0.93, 0.86, 0.91, 0.84, 0.89, 0.91)

_WEIGHT_TOLERANCE = 1e-9


def _seven(values, name: str, lo: float, hi: float) -> tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if len(values) != NUM_DIMENSIONS:
        raise ConfigurationError(f"{name} needs exactly {NUM_DIMENSIONS} values")
    for v in values:
        if not (lo <= v <= hi) or math.isnan(v):
            raise ConfigurationError(f"{name} value {v} outside [{lo}, {hi}]")
    return values


@dataclass(frozen=True)
class RelevanceVector:
    s: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "s", _seven(self.s, "relevance score", -1.0, 1.0))

    def __getitem__(self, dim: Dimension) -> float:
        return self.s[dim.value - 1]


@dataclass(frozen=True)
class DimensionWeights:
    w: tuple[float, ...]

    def __post_init__(self):
        w = _seven(self.w, "weight", 0.0, 1.0)
        if abs(math.fsum(w) - 1.0) > _WEIGHT_TOLERANCE:
            raise ConfigurationError(f"weights must sum to 1, got {math.fsum(w)}")
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls) -> "DimensionWeights":
        return cls((1.0 / NUM_DIMENSIONS,) * NUM_DIMENSIONS)

    @classmethod
    def for_active(cls, labels: DimensionLabels) -> "DimensionWeights":
        """Uniform over active dimensions, zero elsewhere; uniform overall if none."""
        k = sum(labels.y)
        if k == 0:
            return cls.uniform()
        return cls(tuple(y / k for y in labels.y))


@dataclass(frozen=True)
class ThresholdVector:
    tau: tuple[float, ...] = DEFAULT_RELEVANCE_THRESHOLDS

    def __post_init__(self):
        object.__setattr__(self, "tau", _seven(self.tau, "threshold", -1.0, 1.0))

    def __getitem__(self, dim: Dimension) -> float:
        return self.tau[dim.value - 1]


def aggregate(s: RelevanceVector, w: DimensionWeights) -> float:
    """Weighted sum over the seven dimension scores."""
    if abs(math.fsum(w.w) - 1.0) > _WEIGHT_TOLERANCE:
        raise ConfigurationError("weights must sum to 1")
    return math.fsum(wi * si for wi, si in zip(w.w, s.s))


@dataclass(frozen=True)
class ThresholdDecision:
    pass_bits: tuple[bool, ...]   # inactive dimensions pass vacuously
    overall: bool


def passes_thresholds(s: RelevanceVector, tau: ThresholdVector,
                      active: DimensionLabels, require_all: bool = True) -> ThresholdDecision:
    """pass_i = s_i >= tau_i for active dimensions; overall combines active bits.

    `require_all` selects conjunction (default) vs disjunction over the active
    dimensions. With no active dimensions the overall result is vacuously true.
    """
    bits = []
    active_bits = []
    for dim in Dimension:
        if active[dim]:
            ok = s[dim] >= tau[dim]
            bits.append(ok)
            active_bits.append(ok)
        else:
            bits.append(True)
    if not active_bits:
        overall = True
    else:
        overall = all(active_bits) if require_all else any(active_bits)
    return ThresholdDecision(pass_bits=tuple(bits), overall=overall)


# --- Backends -----------------------------------------------------------------

class EvaluatorBackend:
    """Scores one (question, chunk) pair on all seven dimensions."""

    def score(self, question: str, chunk: Chunk) -> RelevanceVector:
        raise NotImplementedError


# Short premise appended per dimension before embedding; identical text on the
# question and document side so identical inputs score exactly 1.
DIMENSION_PROMPTS = {
    Dimension.SEMANTICS: "definition and terminology",
    Dimension.LOCATION: "spatial location and extent",
    Dimension.MORPHOLOGY: "shape and surface form",
    Dimension.ATTRIBUTES: "properties and characteristics",
    Dimension.RELATIONSHIPS: "relations and interactions",
    Dimension.EVOLUTION: "historical development and formation",
    Dimension.MECHANISMS: "driving forces and processes",
}


class HeuristicEvaluator(EvaluatorBackend):
    """Reference backend: embedding cosine per dimension, no trained model.

    Both sides of the pair receive the same dimension premise before
    embedding, so a chunk that repeats the question scores 1.0 everywhere.
    """

    def __init__(self, embedder):
        self._embed = embedder  # callable: list[str] -> list[vector]

    def score(self, question: str, chunk: Chunk) -> RelevanceVector:
        if not question.strip() or not chunk.text.strip():
            raise ConfigurationError("scoring requires non-empty question and chunk text")
        scores = []
        for dim in Dimension:
            premise = DIMENSION_PROMPTS[dim]
            q_vec, c_vec = self._embed([f"{question} {premise}", f"{chunk.text} {premise}"])
            value = cosine_similarity(q_vec, c_vec)
            # float rounding can overshoot the mathematical range by one ulp
            scores.append(min(1.0, max(-1.0, value)))
        return RelevanceVector(tuple(scores))


class GatewayEvaluator(EvaluatorBackend):
    """Delegates to a model gateway's score capability (remote or stub)."""

    def __init__(self, gateway):
        self._gateway = gateway

    def score(self, question: str, chunk: Chunk) -> RelevanceVector:
        if not question.strip() or not chunk.text.strip():
            raise ConfigurationError("scoring requires non-empty question and chunk text")
        try:
            values = self._gateway.score(question, chunk.text)
        except ProtocolError as exc:
            raise ProtocolError(f"scoring chunk {chunk.chunk_id!r}: {exc}") from exc
        except TransportError as exc:
            raise TransportError(f"scoring chunk {chunk.chunk_id!r}: {exc}",
                                 kind=exc.kind, attempts=exc.attempts,
                                 status=exc.status) from exc
        return RelevanceVector(tuple(values))
