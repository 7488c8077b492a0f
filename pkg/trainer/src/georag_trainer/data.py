"""JSONL dataset loading.

Input shapes are the engine's own dataset artifacts: labeled questions carry
question text plus active dimension names (qa records; non-accepted statuses
are skipped), and reading-comprehension instances carry (question, chunk_id,
binary label, dimensions) with chunk text resolved through the chunk table
written at ingest time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DatasetError, MissingArtifactError

DIMENSIONS = ("Semantics", "Location", "Morphology", "Attributes",
              "Relationships", "Evolution", "Mechanisms")
NUM_DIMENSIONS = len(DIMENSIONS)
_DIM_INDEX = {name: i for i, name in enumerate(DIMENSIONS)}


@dataclass(frozen=True)
class QuestionExample:
    question: str
    labels: tuple[int, ...]   # 7 bits in taxonomy order


@dataclass(frozen=True)
class PairExample:
    question: str
    document: str
    label: int                # 1 relevant, 0 irrelevant
    active: tuple[int, ...]   # 7 bits; loss and scoring apply to active dims


def _read_jsonl(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"dataset file {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise DatasetError(f"line {lineno}: record must be an object")
            yield lineno, rec


def _dims_to_bits(dims, lineno: int) -> tuple[int, ...]:
    bits = [0] * NUM_DIMENSIONS
    for name in dims:
        idx = _DIM_INDEX.get(name)
        if idx is None:
            raise DatasetError(f"line {lineno}: unknown dimension {name!r}")
        bits[idx] = 1
    return tuple(bits)


def load_question_dataset(path: str | Path) -> list[QuestionExample]:
    """Labeled questions; records carrying a non-Accepted status are skipped."""
    examples = []
    for lineno, rec in _read_jsonl(path):
        if rec.get("status", "Accepted") != "Accepted":
            continue
        question = rec.get("question")
        if not isinstance(question, str) or not question.strip():
            raise DatasetError(f"line {lineno}: record needs a non-empty 'question'")
        examples.append(QuestionExample(
            question=question, labels=_dims_to_bits(rec.get("dims", ()), lineno)))
    return examples


def load_chunk_table(path: str | Path) -> dict[str, str]:
    table = {}
    for lineno, rec in _read_jsonl(path):
        chunk_id, text = rec.get("chunk_id"), rec.get("text")
        if not isinstance(chunk_id, str) or not isinstance(text, str):
            raise DatasetError(f"line {lineno}: chunk record needs 'chunk_id' and 'text'")
        table[chunk_id] = text
    if not table:
        raise DatasetError(f"chunk table {path} is empty")
    return table


def load_pair_dataset(mrc_path: str | Path,
                      chunks_path: str | Path) -> list[PairExample]:
    chunks = load_chunk_table(chunks_path)
    pairs = []
    for lineno, rec in _read_jsonl(mrc_path):
        question, chunk_id, label = rec.get("question"), rec.get("chunk_id"), rec.get("label")
        if not isinstance(question, str) or not question.strip():
            raise DatasetError(f"line {lineno}: record needs a non-empty 'question'")
        if label not in (0, 1):
            raise DatasetError(f"line {lineno}: label must be 0 or 1, got {label!r}")
        if chunk_id not in chunks:
            raise DatasetError(f"line {lineno}: chunk {chunk_id!r} not in the chunk table")
        pairs.append(PairExample(question=question, document=chunks[chunk_id],
                                 label=int(label),
                                 active=_dims_to_bits(rec.get("dims", ()), lineno)))
    return pairs
