"""Evaluation metrics and the benchmark runner.

Closed-book items (multiple choice, true/false) score by parsing the system's
generated text; open items score with three reference-based metrics (answer
relevancy, faithfulness, context entity recall) plus an embedding-cosine
correctness check. Confusion metrics run on exact rational arithmetic and
convert to float once, so results are correctly rounded.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .classify import Dimension
from .corpus import split_sentences
from .errors import ConfigurationError, SchemaError
from .index import cosine_similarity

BENCH_ITEM_SCHEMA = "georag-bench/1"
REPORT_SCHEMA = "georag-report/1"

_MCQ_LETTER_RE = re.compile(r"\b([A-D])\b")
_TF_TOKEN_RE = re.compile(r"\b(true|false)\b", re.IGNORECASE)


# --- Confusion metrics ----------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ConfigurationError(f"{name} must be a non-negative integer")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class ConfusionMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False   # tp+fp == 0, reported as 0
    recall_undefined: bool = False      # tp+fn == 0, reported as 0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "precision_undefined": self.precision_undefined,
            "recall_undefined": self.recall_undefined,
        }


def confusion_metrics(c: ConfusionCounts) -> ConfusionMetrics:
    """Accuracy, precision, recall, F1 from counts.

    Zero-denominator precision or recall is reported as 0 with a flag instead
    of NaN; F1 is 0 when precision + recall is 0.
    """
    if c.total == 0:
        raise ConfigurationError("cannot score an empty evaluation (all counts zero)")
    accuracy = Fraction(c.tp + c.tn, c.total)
    p_undef = (c.tp + c.fp) == 0
    r_undef = (c.tp + c.fn) == 0
    precision = Fraction(0) if p_undef else Fraction(c.tp, c.tp + c.fp)
    recall = Fraction(0) if r_undef else Fraction(c.tp, c.tp + c.fn)
    if precision + recall == 0:
        f1 = Fraction(0)
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return ConfusionMetrics(accuracy=float(accuracy), precision=float(precision),
                            recall=float(recall), f1=float(f1),
                            precision_undefined=p_undef, recall_undefined=r_undef)


# --- Open-generation metrics ----------------------------------------------------

@dataclass(frozen=True)
class OpenGenCase:
    question: str
    answers: tuple[str, ...]
    contexts: tuple[str, ...] = ()
    reference: str = ""
    reference_entities: frozenset[str] = frozenset()


def answer_relevancy(case: OpenGenCase, embedder) -> float:
    """Mean cosine between each generated answer's embedding and the question's."""
    if not case.answers:
        raise ConfigurationError("answer relevancy needs at least one generated answer")
    qv = embedder.embed_one(case.question)
    sims = [cosine_similarity(embedder.embed_one(a), qv) for a in case.answers]
    return math.fsum(sims) / len(sims)


class SubstringVerifier:
    """An assertion is supported when it appears verbatim in some context."""

    def supports(self, assertion: str, contexts: tuple[str, ...]) -> bool:
        needle = assertion.strip()
        return any(needle in ctx for ctx in contexts)


class GatewayVerifier:
    """Asks a generator backend; any response starting with YES counts as support."""

    def __init__(self, gateway):
        self._gateway = gateway

    def supports(self, assertion: str, contexts: tuple[str, ...]) -> bool:
        from .modelgw import GenerationRequest
        prompt = ("Does the context support the claim? Reply YES or NO.\n"
                  "Context:\n" + "\n".join(contexts) + "\nClaim: " + assertion)
        reply = self._gateway.generate(GenerationRequest(prompt=prompt))
        return reply.strip().upper().startswith("YES")


def extract_assertions(answer: str) -> list[str]:
    """Default extractor: one assertion per sentence."""
    return [s for s in split_sentences(answer) if s.strip()]


def faithfulness(assertions: list[str], contexts: tuple[str, ...] | list[str],
                 verifier=None) -> float:
    """Fraction of assertions the verifier finds supported by the contexts."""
    if not assertions:
        raise ConfigurationError("faithfulness is undefined for zero assertions")
    verifier = verifier or SubstringVerifier()
    contexts = tuple(contexts)
    supported = sum(1 for a in assertions if verifier.supports(a, contexts))
    return float(Fraction(supported, len(assertions)))


def context_entity_recall(ctx_entities, ref_entities) -> float:
    """|ctx ∩ ref| / |ref| with case-folded exact matching."""
    refs = {e.casefold() for e in ref_entities}
    if not refs:
        raise ConfigurationError("entity recall needs a non-empty reference set")
    ctx = {e.casefold() for e in ctx_entities}
    return float(Fraction(len(ctx & refs), len(refs)))


def entities_in_contexts(ref_entities, contexts) -> set[str]:
    """Reference entities that occur (case-folded substring) in any context."""
    folded = [c.casefold() for c in contexts]
    return {e for e in ref_entities if any(e.casefold() in c for c in folded)}


# --- Closed-book answer parsing ---------------------------------------------------

def parse_closed_answer(text: str, qtype: str) -> str | None:
    """First standalone option letter (uppercase A-D) or true/false token.

    Returns the normalized answer ("A".."D", "true", "false") or None when no
    token is found; the caller scores None as incorrect.
    """
    if qtype == "mcq":
        m = _MCQ_LETTER_RE.search(text)
        return m.group(1) if m else None
    if qtype == "tf":
        m = _TF_TOKEN_RE.search(text)
        return m.group(1).lower() if m else None
    raise ConfigurationError(f"not a closed-book question type: {qtype!r}")


# --- Benchmark items ---------------------------------------------------------------

_VALID_TYPES = ("mcq", "tf", "open")


@dataclass(frozen=True)
class BenchItem:
    item_id: str
    question: str
    qtype: str
    gold: str
    dims: tuple[Dimension, ...]
    options: tuple[str, ...] = ()
    reference_entities: tuple[str, ...] = ()

    @classmethod
    def from_record(cls, rec: dict, line: int | None = None) -> "BenchItem":
        def fail(msg: str):
            raise SchemaError(msg, line=line)

        if not isinstance(rec, dict):
            fail("benchmark item must be a JSON object")
        question = rec.get("question")
        if not isinstance(question, str) or not question.strip():
            fail("benchmark item needs a non-empty 'question'")
        qtype = rec.get("type")
        if qtype not in _VALID_TYPES:
            fail(f"'type' must be one of {_VALID_TYPES}, got {qtype!r}")
        if "dims" not in rec:
            fail("benchmark item is missing 'dims'")
        raw_dims = rec["dims"]
        if not isinstance(raw_dims, list) or not raw_dims:
            fail("'dims' must be a non-empty list of dimension names")
        try:
            dims = tuple(Dimension.from_label(d) for d in raw_dims)
        except SchemaError as exc:
            fail(str(exc))
        gold = rec.get("gold")
        if not isinstance(gold, str) or not gold.strip():
            fail("benchmark item needs a non-empty 'gold'")
        options: tuple[str, ...] = ()
        if qtype == "mcq":
            raw_opts = rec.get("options")
            if not isinstance(raw_opts, list) or len(raw_opts) < 2:
                fail("mcq item needs an 'options' list with at least two entries")
            options = tuple(str(o) for o in raw_opts)
            letters = [chr(ord("A") + i) for i in range(len(options))]
            if gold not in letters:
                fail(f"mcq gold {gold!r} is not an option letter in {letters}")
        elif qtype == "tf":
            if gold.lower() not in ("true", "false"):
                fail(f"tf gold must be true or false, got {gold!r}")
            gold = gold.lower()
        refs = tuple(str(e) for e in rec.get("reference_entities", []))
        item_id = str(rec.get("id", f"item-{line}" if line is not None else "item"))
        return cls(item_id=item_id, question=question, qtype=qtype, gold=gold,
                   dims=dims, options=options, reference_entities=refs)

    def prompt_text(self) -> str:
        """Question as presented to the system, options included for mcq."""
        if self.qtype == "mcq":
            lines = [self.question]
            lines += [f"{chr(ord('A') + i)}. {opt}" for i, opt in enumerate(self.options)]
            return "\n".join(lines)
        return self.question


def load_benchmark(path: str | Path) -> list[BenchItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=n) from exc
            items.append(BenchItem.from_record(rec, line=n))
    return items


# --- Benchmark runner -------------------------------------------------------------

@dataclass(frozen=True)
class SystemAnswer:
    text: str
    contexts: tuple[str, ...] = ()


@dataclass
class BenchmarkReport:
    mode: str
    per_dimension: dict[str, dict]
    overall: dict
    cases: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "mode": self.mode,
            "per_dimension": self.per_dimension,
            "overall": self.overall,
            "cases": self.cases,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)


def _mean(values: list[float]) -> float | None:
    if not values:
        return None
    return math.fsum(values) / len(values)


def _closed_rows(cases: list[dict]) -> dict[str, dict]:
    rows = {}
    for dim in Dimension:
        mine = [c for c in cases if dim.label in c["dims"]]
        if not mine:
            continue
        rows[dim.label] = _closed_row(mine)
    return rows


def _closed_row(cases: list[dict]) -> dict:
    mcq = [c for c in cases if c["type"] == "mcq"]
    tf = [c for c in cases if c["type"] == "tf"]
    row = {
        "n": len(cases),
        "n_mcq": len(mcq),
        "n_tf": len(tf),
        "unparseable": sum(1 for c in cases if c["parsed"] is None),
    }
    if mcq:
        row["mcq_accuracy"] = float(Fraction(sum(1 for c in mcq if c["correct"]), len(mcq)))
    if tf:
        counts = ConfusionCounts(
            tp=sum(1 for c in tf if c["gold"] == "true" and c["correct"]),
            tn=sum(1 for c in tf if c["gold"] == "false" and c["correct"]),
            fn=sum(1 for c in tf if c["gold"] == "true" and not c["correct"]),
            fp=sum(1 for c in tf if c["gold"] == "false" and not c["correct"]),
        )
        row["tf"] = confusion_metrics(counts).to_dict()
        row["tf"]["n"] = len(tf)
    return row


def _run_closed(items: list[BenchItem], system) -> tuple[list[dict], dict[str, dict], dict]:
    cases = []
    for item in items:
        response = system(item)
        parsed = parse_closed_answer(response.text, item.qtype)
        correct = parsed is not None and parsed == item.gold
        cases.append({
            "id": item.item_id,
            "type": item.qtype,
            "dims": [d.label for d in item.dims],
            "gold": item.gold,
            "answer_text": response.text,
            "parsed": parsed,
            "correct": correct,
        })
    return cases, _closed_rows(cases), _closed_row(cases)


def _open_rows(cases: list[dict]) -> dict[str, dict]:
    rows = {}
    for dim in Dimension:
        mine = [c for c in cases if dim.label in c["dims"]]
        if not mine:
            continue
        rows[dim.label] = _open_row(mine)
    return rows


def _open_row(cases: list[dict]) -> dict:
    recalls = [c["entity_recall"] for c in cases if c["entity_recall"] is not None]
    return {
        "n": len(cases),
        "relevancy": _mean([c["relevancy"] for c in cases]),
        "faithfulness": _mean([c["faithfulness"] for c in cases]),
        "entity_recall": _mean(recalls),
        "n_entity_recall": len(recalls),
        "correctness": float(Fraction(sum(1 for c in cases if c["correct"]), len(cases))),
    }


def _run_open(items: list[BenchItem], system, embedder, verifier,
              correctness_bar: float) -> tuple[list[dict], dict[str, dict], dict]:
    cases = []
    for item in items:
        response = system(item)
        case = OpenGenCase(question=item.question, answers=(response.text,),
                           contexts=response.contexts, reference=item.gold,
                           reference_entities=frozenset(item.reference_entities))
        relevancy = answer_relevancy(case, embedder)
        assertions = extract_assertions(response.text)
        faith = (faithfulness(assertions, case.contexts, verifier)
                 if assertions else 0.0)
        recall = None
        if item.reference_entities:
            found = entities_in_contexts(item.reference_entities, response.contexts)
            recall = context_entity_recall(found, item.reference_entities)
        cos = cosine_similarity(embedder.embed_one(response.text),
                                embedder.embed_one(item.gold))
        cases.append({
            "id": item.item_id,
            "type": "open",
            "dims": [d.label for d in item.dims],
            "gold": item.gold,
            "answer_text": response.text,
            "relevancy": relevancy,
            "faithfulness": faith,
            "entity_recall": recall,
            "correctness_cosine": cos,
            "correct": cos >= correctness_bar,
        })
    return cases, _open_rows(cases), _open_row(cases)


def run_benchmark(items: list[BenchItem], system, mode: str, embedder=None,
                  verifier=None, correctness_bar: float = 0.7,
                  metadata: dict | None = None) -> BenchmarkReport:
    """Score a dataset in closed or open mode.

    `system` is a callable (BenchItem) -> SystemAnswer. Closed mode consumes
    mcq/tf items, open mode consumes open items; an empty selection is an
    error. Low scores never are.
    """
    if mode not in ("closed", "open"):
        raise ConfigurationError(f"mode must be closed or open, got {mode!r}")
    if mode == "closed":
        selected = [it for it in items if it.qtype in ("mcq", "tf")]
    else:
        selected = [it for it in items if it.qtype == "open"]
    if not selected:
        raise ConfigurationError(f"no {mode}-mode items in the dataset")
    if mode == "closed":
        cases, rows, overall = _run_closed(selected, system)
    else:
        if embedder is None:
            raise ConfigurationError("open mode needs an embedder")
        cases, rows, overall = _run_open(selected, system, embedder,
                                         verifier or SubstringVerifier(),
                                         correctness_bar)
    return BenchmarkReport(mode=mode, per_dimension=rows, overall=overall,
                           cases=cases, metadata=dict(metadata or {}))
