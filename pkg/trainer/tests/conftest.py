"""Synthetic separable datasets and pre-trained artifacts shared across tests.

Classifier data plants per-dimension keywords: a question contains a
dimension's keywords iff that dimension is active, so a bag-of-words rule
labels it perfectly. Evaluator data plants topic tokens: a document is
relevant iff it contains the question's topic token. Both rules serve as
independent oracles for what a trained model should be able to reach.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from georag_trainer.data import DIMENSIONS
from georag_trainer.train import (TrainConfig, train_classifier,
                                  train_evaluator)

FILLER = ("the", "a", "of", "in", "region", "terrain", "sample", "unit",
          "what", "where", "how", "describe", "survey", "field", "zone")
KEYWORDS = {d: tuple(f"key{d}{s}" for s in "abc") for d in range(len(DIMENSIONS))}
TOPICS = tuple(f"topic{t:02d}" for t in range(96))

CLASSIFIER_CFG = TrainConfig.for_classifier(
    learning_rate=0.08, batch_size=64, epochs=10,
    n_features=512, hidden_dim=64, max_seq_len=64)
EVALUATOR_CFG = TrainConfig.for_evaluator(
    learning_rate=0.08, batch_size=32, epochs=10,
    n_features=2048, hidden_dim=16, max_seq_len=64)


def write_jsonl(path: Path, records) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def question_records(n: int = 480, seed: int = 7) -> list[dict]:
    rng = random.Random(seed)
    records = []
    for i in range(n):
        bits = [1 if rng.random() < 0.45 else 0 for _ in DIMENSIONS]
        tokens = rng.choices(FILLER, k=rng.randint(3, 6))
        for d, bit in enumerate(bits):
            if bit:
                tokens.extend(rng.sample(KEYWORDS[d], rng.randint(1, 2)))
        rng.shuffle(tokens)
        records.append({
            "schema": "georag-qa/1", "pair_id": f"q{i:04d}", "status": "Accepted",
            "question": " ".join(tokens),
            "dims": [DIMENSIONS[d] for d, bit in enumerate(bits) if bit],
            "answer": "", "reject_reason": "", "source_triples": [],
        })
    for col in range(len(DIMENSIONS)):
        values = {rec["dims"].count(DIMENSIONS[col]) for rec in records}
        assert values == {0, 1}, "fixture must give every dimension both classes"
    # poison: contradictory records that must be skipped by status
    for i in range(20):
        d = i % len(DIMENSIONS)
        records.append({
            "schema": "georag-qa/1", "pair_id": f"r{i:04d}", "status": "Rejected",
            "question": " ".join(KEYWORDS[d]), "dims": [],
            "answer": "", "reject_reason": "NoDimensions", "source_triples": [],
        })
    return records


def evaluator_records(seed: int = 11) -> tuple[list[dict], list[dict]]:
    """Returns (mrc records, chunk records)."""
    rng = random.Random(seed)
    chunks, texts = [], {}
    for t, topic in enumerate(TOPICS):
        for j in range(3):
            words = rng.choices(FILLER, k=rng.randint(6, 10)) + [topic]
            rng.shuffle(words)
            cid = f"c{t:02d}#{j}"
            texts[cid] = " ".join(words)
            chunks.append({"chunk_id": cid, "text": texts[cid],
                           "doc_id": topic, "source": "report"})
    pairs = []
    for t, topic in enumerate(TOPICS):
        question = f"what explains the {topic} pattern across this zone"
        dims = rng.sample(DIMENSIONS, rng.randint(1, 3))
        # negatives come from the next topic, so every chunk appears once as
        # a positive and once as a negative: only the question-document
        # interaction separates the classes, never a chunk or question alone
        u = (t + 1) % len(TOPICS)
        for j in range(3):
            pairs.append({"schema": "georag-mrc/1", "pair_id": f"{topic}/q",
                          "question": question, "chunk_id": f"c{t:02d}#{j}",
                          "dims": dims, "label": 1})
            pairs.append({"schema": "georag-mrc/1", "pair_id": f"{topic}/q",
                          "question": question, "chunk_id": f"c{u:02d}#{j}",
                          "dims": dims, "label": 0})
    for pair in pairs:  # the planted relevance rule must match every label
        present = pair["question"].split()[3] in texts[pair["chunk_id"]].split()
        assert present == bool(pair["label"])
    return pairs, chunks


@pytest.fixture(scope="session")
def classifier_dataset(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("data") / "qa.jsonl"
    return write_jsonl(path, question_records())


@pytest.fixture(scope="session")
def evaluator_dataset(tmp_path_factory) -> tuple[Path, Path]:
    root = tmp_path_factory.mktemp("data")
    pairs, chunks = evaluator_records()
    return (write_jsonl(root / "mrc.jsonl", pairs),
            write_jsonl(root / "chunks.jsonl", chunks))


@pytest.fixture(scope="session")
def classifier_artifact(classifier_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("artifacts") / "classifier"
    return train_classifier(classifier_dataset, CLASSIFIER_CFG, out)


@pytest.fixture(scope="session")
def evaluator_artifact(evaluator_dataset, tmp_path_factory):
    mrc, chunks = evaluator_dataset
    out = tmp_path_factory.mktemp("artifacts") / "evaluator"
    return train_evaluator(mrc, chunks, EVALUATOR_CFG, out)
