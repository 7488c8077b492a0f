"""Seven-dimension question classification, threshold labeling, and routing.

Questions map to probabilities over seven geographic knowledge dimensions.
Dimensions six and seven (evolution, mechanisms) mark composite questions that
take the iterative retrieval path; everything else routes as simple.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .corpus import tokenize
from .errors import ConfigurationError, SchemaError

NUM_DIMENSIONS = 7


class Dimension(Enum):
    SEMANTICS = 1
    LOCATION = 2
    MORPHOLOGY = 3
    ATTRIBUTES = 4
    RELATIONSHIPS = 5
    EVOLUTION = 6
    MECHANISMS = 7

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def ordered(cls) -> tuple["Dimension", ...]:
        return tuple(cls)

    @classmethod
    def from_label(cls, label: str) -> "Dimension":
        try:
            return cls[label.upper()]
        except KeyError:
            raise SchemaError(f"unknown dimension {label!r}") from None


class Route(str, Enum):
    SIMPLE = "simple"
    COMPOSITE = "composite"


def _check_seven(values, name: str, lo: float, hi: float) -> tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if len(values) != NUM_DIMENSIONS:
        raise ConfigurationError(f"{name} needs exactly {NUM_DIMENSIONS} values")
    for v in values:
        if not (lo <= v <= hi) or math.isnan(v):
            raise ConfigurationError(f"{name} value {v} outside [{lo}, {hi}]")
    return values


@dataclass(frozen=True)
class DimensionProbs:
    p: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", _check_seven(self.p, "probability", 0.0, 1.0))

    def __getitem__(self, dim: Dimension) -> float:
        return self.p[dim.value - 1]


@dataclass(frozen=True)
class DimensionLabels:
    y: tuple[int, ...]

    def __post_init__(self):
        y = tuple(int(v) for v in self.y)
        if len(y) != NUM_DIMENSIONS or any(v not in (0, 1) for v in y):
            raise ConfigurationError("labels must be seven bits")
        object.__setattr__(self, "y", y)

    def __getitem__(self, dim: Dimension) -> int:
        return self.y[dim.value - 1]

    @property
    def active(self) -> tuple[Dimension, ...]:
        return tuple(d for d in Dimension if self[d])

    @property
    def any_active(self) -> bool:
        return any(self.y)

    @classmethod
    def from_dimensions(cls, dims) -> "DimensionLabels":
        dims = set(dims)
        return cls(tuple(1 if d in dims else 0 for d in Dimension))


def sigmoid(z: float) -> float:
    """Logistic function 1/(1+e^-z); saturates instead of overflowing."""
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def assign_labels(probs: DimensionProbs, thresholds) -> DimensionLabels:
    """y_i = 1 iff p_i >= tau_i (inclusive)."""
    taus = _check_seven(thresholds, "threshold", 0.0, 1.0)
    return DimensionLabels(tuple(1 if p >= t else 0 for p, t in zip(probs.p, taus)))


DEFAULT_CLASSIFIER_THRESHOLDS = (0.5,) * NUM_DIMENSIONS


def route(labels: DimensionLabels) -> Route:
    """Composite iff evolution or mechanisms is active."""
    if labels[Dimension.EVOLUTION] or labels[Dimension.MECHANISMS]:
        return Route.COMPOSITE
    return Route.SIMPLE


# --- Backends -----------------------------------------------------------------

class ClassifierBackend:
    """Maps a question to seven dimension probabilities."""

    def classify(self, question: str) -> DimensionProbs:
        raise NotImplementedError


class LexicalClassifier(ClassifierBackend):
    """Keyword-lexicon baseline: p_i = hits_i / max(1, max_j hits_j).

    A lexicon term counts as a hit when all of its tokens appear in the
    question's token set, so scoring is insensitive to word order and case.
    """

    def __init__(self, lexicon: dict[Dimension, list[str]]):
        self.lexicon = {
            dim: [tuple(tokenize(term.lower())) for term in terms]
            for dim, terms in lexicon.items()
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "LexicalClassifier":
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid lexicon JSON: {exc}") from exc
        if "dimensions" not in rec:
            raise SchemaError("lexicon file needs a 'dimensions' map")
        lexicon = {Dimension.from_label(name): list(terms)
                   for name, terms in rec["dimensions"].items()}
        return cls(lexicon)

    @classmethod
    def default(cls) -> "LexicalClassifier":
        return cls.from_file(Path(__file__).parent / "data" / "lexicon.json")

    def classify(self, question: str) -> DimensionProbs:
        if not question.strip():
            raise ConfigurationError("cannot classify an empty question")
        present = set(tokenize(question.lower()))
        hits = []
        for dim in Dimension:
            terms = self.lexicon.get(dim, [])
            hits.append(sum(1 for term in terms if term and all(t in present for t in term)))
        scale = max(1, max(hits))
        return DimensionProbs(tuple(h / scale for h in hits))


class GatewayClassifier(ClassifierBackend):
    """Delegates to a model gateway's classify capability (remote or stub)."""

    def __init__(self, gateway):
        self._gateway = gateway

    def classify(self, question: str) -> DimensionProbs:
        if not question.strip():
            raise ConfigurationError("cannot classify an empty question")
        return DimensionProbs(tuple(self._gateway.classify(question)))
