from __future__ import annotations

import pytest

from georag.classify import DimensionProbs, LexicalClassifier
from georag.corpus import Chunk, CleanDocument, Source
from georag.evaluate import GatewayEvaluator, HeuristicEvaluator
from georag.index import VectorIndex
from georag.modelgw import Gateway, StubScript
from georag.pipeline import EngineDeps


def make_doc(doc_id: str, sentences, source=Source.OTHER) -> CleanDocument:
    return CleanDocument(id=doc_id, sentences=tuple(sentences), source=source)


def make_chunk(chunk_id: str, text: str, doc_id: str | None = None,
               span=(0, 1), themes=()) -> Chunk:
    return Chunk(chunk_id=chunk_id, doc_id=doc_id or chunk_id.split("#")[0],
                 text=text, sentence_span=tuple(span), themes=frozenset(themes))


def sentences_about(topic: str, n: int = 6) -> list[str]:
    return [f"The {topic} survey records observation {i} with several careful measurements."
            for i in range(n)]


def build_index(chunks, gateway: Gateway, seed: int = 42) -> VectorIndex:
    index = VectorIndex(seed=seed)
    for chunk in chunks:
        index.upsert(chunk, gateway.embed_one(chunk.text))
    return index


class FixedClassifier:
    """Classifier that returns one preset probability vector for every question."""

    def __init__(self, probs):
        self._probs = DimensionProbs(tuple(probs))

    def classify(self, question: str) -> DimensionProbs:
        return self._probs


@pytest.fixture
def stub_gateway() -> Gateway:
    return Gateway.stub()


@pytest.fixture
def lexical_classifier() -> LexicalClassifier:
    return LexicalClassifier.default()


@pytest.fixture
def river_chunks() -> list[Chunk]:
    texts = {
        "rivers#0-1": "The river deposits sediment along its lower course every year.",
        "deltas#0-1": "A delta forms where the river meets the still water of the sea.",
        "basins#0-1": "The basin floor subsided steadily under the weight of sediment.",
        "dunes#0-1": "Coastal dunes migrate inland when the vegetation cover is removed.",
    }
    return [make_chunk(cid, text) for cid, text in texts.items()]


@pytest.fixture
def river_index(river_chunks, stub_gateway) -> VectorIndex:
    return build_index(river_chunks, stub_gateway)


def heuristic_deps(index: VectorIndex, gateway: Gateway, classifier=None) -> EngineDeps:
    return EngineDeps(index=index, gateway=gateway,
                      classifier=classifier or LexicalClassifier.default(),
                      evaluator=HeuristicEvaluator(gateway.embed))


def scripted_deps(index: VectorIndex, script: StubScript, classifier=None) -> EngineDeps:
    gateway = Gateway.stub(script)
    return EngineDeps(index=index, gateway=gateway,
                      classifier=classifier or LexicalClassifier.default(),
                      evaluator=GatewayEvaluator(gateway))


BASIN_QUERY = "how did the basin form"

BASIN_CHUNKS = {
    "basin#0-2": "The basin floor dropped along deep faults during the late Miocene.",
    "basin#2-4": "Sediment filled the depression as the crust continued to sink.",
    "coast#0-2": "Longshore drift moves sand along the coast in summer.",
    "coast#2-4": "Storm waves cut notches into the soft cliff base.",
}


def basin_script() -> StubScript:
    """Two-round expansion scenario: flat scores first, passing scores after
    the keyword round rewrites the query."""
    return StubScript(
        generate_rules=[
            ("Propose additional search keywords", "vertical tectonics subsidence"),
            ("Act as a", "The basin formed by fault-controlled subsidence."),
        ],
        classify_rules=[("basin form", [0.1, 0.0, 0.0, 0.0, 0.0, 0.9, 0.0])],
        score_rules=[("vertical tectonics", [0.6, 0.0, 0.0, 0.0, 0.0, 0.95, 0.0])],
        score_default=[0.2, 0.0, 0.0, 0.0, 0.0, 0.2, 0.0],
    )


def basin_scenario():
    """(query, config, deps) reproducing the frozen expansion trace."""
    from georag.classify import GatewayClassifier
    from georag.pipeline import PipelineConfig

    gateway = Gateway.stub(basin_script())
    chunks = [make_chunk(cid, text) for cid, text in BASIN_CHUNKS.items()]
    index = build_index(chunks, gateway)
    deps = EngineDeps(index=index, gateway=gateway,
                      classifier=GatewayClassifier(gateway),
                      evaluator=GatewayEvaluator(gateway))
    config = PipelineConfig(k=2, max_iterations=3, recursion_trigger_threshold=0.5)
    return BASIN_QUERY, config, deps
