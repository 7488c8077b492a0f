"""Staged QA-corpus construction over a generator backend.

Each stage is one prompt-templated backend call followed by a deterministic
validation rule: fact segments must quote the document, triple endpoints must
come from the extracted entity list, question-answer pairs must parse and
survive a validator call, and the typology stage must assign at least one
dimension. Failures never raise; they land in a rejection report. The MRC
builder pairs each accepted question with its source chunks as positives and
the highest-cosine foreign chunks as adversarial negatives.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum

from .classify import (DEFAULT_CLASSIFIER_THRESHOLDS, Dimension, assign_labels)
from .corpus import CleanDocument
from .errors import ConfigurationError
from .index import VectorIndex, cosine_similarity
from .modelgw import GenerationRequest

TRIPLE_SCHEMA = "georag-triple/1"
QA_SCHEMA = "georag-qa/1"
MRC_SCHEMA = "georag-mrc/1"

# Subject text sits on the last line of every stage prompt, so an unscripted
# echo backend degrades to predictable, validation-checked output.
FACT_PROMPT = ("Copy the knowledge-dense passages from the document on the last line, "
               "verbatim, one passage per line.")
ENTITY_PROMPT = ("List the geographic entities named in the passage on the last line, "
                 "one per line.")
TRIPLE_PROMPT = ("State relationships between the listed entities as head|relation|tail, "
                 "one per line, using only entities from the list.")
QA_PROMPT = ("Write one exam question grounded in the relationship on the last line. "
             "Reply with exactly two lines, 'Q: ...' then 'A: ...'.")
VALIDATE_PROMPT = ("Review the question-answer pair on the last lines for clarity and "
                   "grounding. Reply ACCEPT, or REJECT: reason.")


class QAStatus(str, Enum):
    PENDING = "Pending"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"


class QAReject(str, Enum):
    BACKEND_DECLINED = "BackendDeclined"
    EMPTY_QUESTION = "EmptyQuestion"
    EMPTY_ANSWER = "EmptyAnswer"
    VALIDATOR_REJECTED = "ValidatorRejected"
    NO_DIMENSIONS = "NoDimensions"


@dataclass(frozen=True)
class FactSegment:
    segment_id: str
    doc_id: str
    text: str
    sentence_span: tuple[int, int]      # [start, end) into the document's sentences


@dataclass(frozen=True)
class Triple:
    triple_id: str
    head: str
    relation: str
    tail: str
    segment_id: str

    def to_dict(self) -> dict:
        return {"schema": TRIPLE_SCHEMA, "triple_id": self.triple_id, "head": self.head,
                "relation": self.relation, "tail": self.tail,
                "segment_id": self.segment_id}


@dataclass(frozen=True)
class QAPair:
    pair_id: str
    question: str
    answer: str
    source_triples: tuple[str, ...]
    dims: frozenset[Dimension] = frozenset()
    status: QAStatus = QAStatus.PENDING
    reject_reason: str = ""

    def to_dict(self) -> dict:
        return {
            "schema": QA_SCHEMA, "pair_id": self.pair_id, "question": self.question,
            "answer": self.answer, "source_triples": list(self.source_triples),
            "dims": [d.label for d in Dimension if d in self.dims],
            "status": self.status.value, "reject_reason": self.reject_reason,
        }


@dataclass(frozen=True)
class MRCInstance:
    question: str
    chunk_id: str
    label: int
    dims: frozenset[Dimension]
    pair_id: str

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ConfigurationError("label must be 0 or 1")

    def to_dict(self) -> dict:
        return {
            "schema": MRC_SCHEMA, "question": self.question, "chunk_id": self.chunk_id,
            "label": self.label, "dims": [d.label for d in Dimension if d in self.dims],
            "pair_id": self.pair_id,
        }


@dataclass
class RejectionReport:
    """Per-stage tallies of dropped outputs, with one entry per drop."""

    entries: list[dict] = field(default_factory=list)

    def add(self, stage: str, subject: str, reason: str) -> None:
        self.entries.append({"stage": stage, "subject": subject, "reason": reason})

    def count(self, stage: str | None = None) -> int:
        if stage is None:
            return len(self.entries)
        return sum(1 for e in self.entries if e["stage"] == stage)

    def to_dict(self) -> dict:
        return {"schema": "georag-rejections/1", "total": len(self.entries),
                "entries": self.entries}


def _gen(gateway, instruction: str, subject: str) -> str:
    return gateway.generate(GenerationRequest(prompt=instruction + "\n" + subject))


def _span_for(doc: CleanDocument, text: str) -> tuple[int, int] | None:
    """Sentence span [start, end) covering `text` inside the joined document."""
    joined = doc.text
    pos = joined.find(text)
    if pos < 0:
        return None
    end_pos = pos + len(text)
    offsets = []
    cursor = 0
    for s in doc.sentences:
        offsets.append((cursor, cursor + len(s)))
        cursor += len(s) + 1     # single joining space
    start = next(i for i, (a, b) in enumerate(offsets) if b > pos)
    stop = max(i for i, (a, b) in enumerate(offsets) if a < end_pos) + 1
    return (start, stop)


def extract_facts(doc: CleanDocument, gateway,
                  report: RejectionReport | None = None) -> list[FactSegment]:
    """Backend-proposed spans, kept only when they quote the document verbatim."""
    report = report if report is not None else RejectionReport()
    raw = _gen(gateway, FACT_PROMPT, doc.text)
    segments = []
    seen = set()
    for line in raw.splitlines():
        text = line.strip()
        if not text or text in seen:
            continue
        seen.add(text)
        span = _span_for(doc, text)
        if span is None:
            report.add("facts", doc.id, f"not a verbatim passage: {text[:60]!r}")
            continue
        segments.append(FactSegment(segment_id=f"{doc.id}/s{len(segments)}",
                                    doc_id=doc.id, text=text, sentence_span=span))
    return segments


def extract_entities(segment: FactSegment, gateway) -> list[str]:
    raw = _gen(gateway, ENTITY_PROMPT, segment.text)
    entities = []
    seen = set()
    for line in raw.splitlines():
        name = line.strip()
        if name and name not in seen:
            seen.add(name)
            entities.append(name)
    return entities


def extract_triples(segment: FactSegment, entities: list[str], gateway,
                    report: RejectionReport | None = None) -> list[Triple]:
    """head|relation|tail lines; endpoints must come from the entity list."""
    report = report if report is not None else RejectionReport()
    if not entities:
        return []
    known = set(entities)
    subject = "Entities: " + "; ".join(entities) + "\n" + segment.text
    raw = _gen(gateway, TRIPLE_PROMPT, subject)
    triples = []
    seen = set()
    for line in raw.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 3 or not all(parts):
            report.add("triples", segment.segment_id, f"malformed line: {line[:60]!r}")
            continue
        head, relation, tail = parts
        if head not in known or tail not in known:
            report.add("triples", segment.segment_id,
                       f"unknown entity in ({head}, {relation}, {tail})")
            continue
        key = (head, relation, tail)
        if key in seen:
            continue
        seen.add(key)
        triples.append(Triple(triple_id=f"{segment.segment_id}/t{len(triples)}",
                              head=head, relation=relation, tail=tail,
                              segment_id=segment.segment_id))
    return triples


def generate_question(triple: Triple, gateway) -> QAPair:
    """One QA pair per triple; malformed backend output becomes a rejection."""
    subject = f"Relationship: {triple.head} | {triple.relation} | {triple.tail}"
    raw = _gen(gateway, QA_PROMPT, subject)
    question = answer = ""
    for line in raw.splitlines():
        line = line.strip()
        if line.startswith("Q:") and not question:
            question = line[2:].strip()
        elif line.startswith("A:") and not answer:
            answer = line[2:].strip()
    pair = QAPair(pair_id=f"{triple.triple_id}/q", question=question, answer=answer,
                  source_triples=(triple.triple_id,))
    if not question:
        return replace(pair, status=QAStatus.REJECTED,
                       reject_reason=QAReject.BACKEND_DECLINED.value)
    if not answer:
        return replace(pair, status=QAStatus.REJECTED,
                       reject_reason=QAReject.EMPTY_ANSWER.value)
    return pair


def validate_qa(pair: QAPair, gateway) -> QAPair:
    """Validator call: ACCEPT keeps the pair pending-positive, REJECT drops it."""
    if pair.status is QAStatus.REJECTED:
        return pair
    if not pair.question:
        return replace(pair, status=QAStatus.REJECTED,
                       reject_reason=QAReject.EMPTY_QUESTION.value)
    if not pair.answer:
        return replace(pair, status=QAStatus.REJECTED,
                       reject_reason=QAReject.EMPTY_ANSWER.value)
    subject = f"Q: {pair.question}\nA: {pair.answer}"
    verdict = _gen(gateway, VALIDATE_PROMPT, subject).strip()
    if verdict.upper().startswith("ACCEPT"):
        return pair
    if verdict.upper().startswith("REJECT"):
        return replace(pair, status=QAStatus.REJECTED,
                       reject_reason=QAReject.VALIDATOR_REJECTED.value)
    return replace(pair, status=QAStatus.REJECTED,
                   reject_reason=QAReject.BACKEND_DECLINED.value)


def assign_typology(pair: QAPair, classifier,
                    thresholds=DEFAULT_CLASSIFIER_THRESHOLDS) -> QAPair:
    """Label the question's dimensions; no active dimension rejects the pair."""
    if pair.status is QAStatus.REJECTED:
        return pair
    probs = classifier.classify(pair.question)
    labels = assign_labels(probs, thresholds)
    if not labels.any_active:
        return replace(pair, status=QAStatus.REJECTED,
                       reject_reason=QAReject.NO_DIMENSIONS.value)
    return replace(pair, dims=frozenset(labels.active), status=QAStatus.ACCEPTED)


@dataclass
class SopResult:
    segments: list[FactSegment]
    triples: list[Triple]
    pairs: list[QAPair]
    report: RejectionReport

    @property
    def accepted(self) -> list[QAPair]:
        return [p for p in self.pairs if p.status is QAStatus.ACCEPTED]


def run_sop(docs: list[CleanDocument], gateway, classifier,
            thresholds=DEFAULT_CLASSIFIER_THRESHOLDS) -> SopResult:
    """Full staged run over a cleaned corpus, documents in input order."""
    report = RejectionReport()
    segments: list[FactSegment] = []
    triples: list[Triple] = []
    pairs: list[QAPair] = []
    for doc in docs:
        doc_segments = extract_facts(doc, gateway, report)
        segments.extend(doc_segments)
        for segment in doc_segments:
            entities = extract_entities(segment, gateway)
            seg_triples = extract_triples(segment, entities, gateway, report)
            triples.extend(seg_triples)
            for triple in seg_triples:
                pair = generate_question(triple, gateway)
                pair = validate_qa(pair, gateway)
                pair = assign_typology(pair, classifier, thresholds)
                if pair.status is QAStatus.REJECTED:
                    report.add("qa", pair.pair_id, pair.reject_reason)
                pairs.append(pair)
    return SopResult(segments=segments, triples=triples, pairs=pairs, report=report)


def _source_chunks(pair: QAPair, triples_by_id: dict[str, Triple],
                   segments_by_id: dict[str, FactSegment],
                   index: VectorIndex) -> list[str]:
    """Chunks of the source document overlapping the pair's segment spans."""
    out = []
    for triple_id in pair.source_triples:
        segment = segments_by_id[triples_by_id[triple_id].segment_id]
        lo, hi = segment.sentence_span
        for chunk in index.chunks():
            if chunk.doc_id != segment.doc_id:
                continue
            a, b = chunk.sentence_span
            if a < hi and lo < b and chunk.chunk_id not in out:
                out.append(chunk.chunk_id)
    return sorted(out)


def build_mrc_dataset(pairs: list[QAPair], index: VectorIndex, embedder,
                      sop: SopResult, negatives_per_positive: int = 1,
                      seed: int = 42,
                      report: RejectionReport | None = None) -> list[MRCInstance]:
    """Positives from source chunks, negatives from the hardest foreign chunks.

    Negative count per pair is negatives_per_positive times its positive count,
    drawn from non-source-document chunks in descending cosine order. The final
    list is shuffled with the given seed.
    """
    if negatives_per_positive < 0:
        raise ConfigurationError("negatives_per_positive must be >= 0")
    report = report if report is not None else RejectionReport()
    triples_by_id = {t.triple_id: t for t in sop.triples}
    segments_by_id = {s.segment_id: s for s in sop.segments}
    instances: list[MRCInstance] = []
    for pair in pairs:
        if pair.status is not QAStatus.ACCEPTED:
            continue
        positives = _source_chunks(pair, triples_by_id, segments_by_id, index)
        if not positives:
            report.add("mrc", pair.pair_id, "no source chunks in index")
            continue
        source_docs = {index.get_chunk(cid).doc_id for cid in positives}
        for cid in positives:
            instances.append(MRCInstance(question=pair.question, chunk_id=cid,
                                         label=1, dims=pair.dims, pair_id=pair.pair_id))
        wanted = negatives_per_positive * len(positives)
        if wanted == 0:
            continue
        qv = embedder.embed_one(pair.question)
        foreign = [(-cosine_similarity(qv, index.get_vector(chunk.chunk_id)), chunk.chunk_id)
                   for chunk in index.chunks() if chunk.doc_id not in source_docs]
        if not foreign:
            report.add("mrc", pair.pair_id, "no eligible negative chunks")
            continue
        foreign.sort()
        for _, cid in foreign[:wanted]:
            instances.append(MRCInstance(question=pair.question, chunk_id=cid,
                                         label=0, dims=pair.dims, pair_id=pair.pair_id))
    random.Random(seed).shuffle(instances)
    return instances


def write_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")
