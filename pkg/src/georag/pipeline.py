"""End-to-end question answering: classify, route, retrieve, score, generate.

A query is classified over the seven dimensions and routed: simple questions
get one top-k retrieval round, composite ones (evolution or mechanisms active)
may expand the query with generated keywords and retrieve again. Every round
scores the accumulated evidence against the current query text, so the chunk
pool available to the prompt only ever grows. The full run is captured in a
QueryTrace that replays bit-exactly under stub backends.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

from .classify import (DEFAULT_CLASSIFIER_THRESHOLDS, ClassifierBackend, DimensionLabels,
                       DimensionProbs, Route, assign_labels, route)
from .errors import ConfigurationError, GeoragError
from .evaluate import (DimensionWeights, EvaluatorBackend, RelevanceVector, ThresholdVector,
                       aggregate, passes_thresholds)
from .index import ExpansionMode, RetrievalHit, ThemeGraph, VectorIndex, expand_retrieval
from .modelgw import Gateway, GenerationRequest
from .prompt import (DomainContext, EvidenceItem, GenerationParams, GeoPrompt,
                     TemperatureSchedule, build_geoprompt, temperature_for)

TRACE_SCHEMA = "georag-trace/1"

ABSTENTION_TEXT = "No sufficiently relevant evidence was retrieved; refraining from answering."

# The query sits alone on the last line so a backend that cannot follow the
# instruction degenerates to echoing it, which expand_query treats as a no-op.
KEYWORD_INSTRUCTION = ("Propose additional search keywords that would help answer the "
                       "question on the last line. Reply with keywords separated by "
                       "single spaces, or NONE.")

HALT_SIMPLE = "simple_route"
HALT_SCORE = "score_above_threshold"
HALT_BUDGET = "budget_exhausted"
HALT_EMPTY_KEYWORDS = "empty_keywords"
HALT_UNCHANGED = "query_unchanged"
HALT_NO_EVIDENCE = "no_evidence"


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 5
    max_iterations: int = 3
    recursion_trigger_threshold: float = 0.5
    weights: DimensionWeights | None = None     # None: uniform over active dims
    thresholds: ThresholdVector = ThresholdVector()
    classifier_thresholds: tuple[float, ...] = DEFAULT_CLASSIFIER_THRESHOLDS
    schedule: TemperatureSchedule = TemperatureSchedule()
    max_tokens: int = 512
    beam_width: int = 5
    length_penalty: float = 0.6
    require_all: bool = True                    # conjunction over active dims
    single_prompt: bool = False                 # one prompt over all passing docs
    retrieval_char_budget: int = 16384          # ~4k tokens at 4 chars/token
    generation_char_budget: int = 32768         # ~8k tokens at 4 chars/token
    domain: DomainContext = DomainContext()
    template: str | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.retrieval_char_budget < 1 or self.generation_char_budget < 1:
            raise ConfigurationError("character budgets must be positive")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "max_iterations": self.max_iterations,
            "recursion_trigger_threshold": self.recursion_trigger_threshold,
            "weights": list(self.weights.w) if self.weights else None,
            "thresholds": list(self.thresholds.tau),
            "classifier_thresholds": list(self.classifier_thresholds),
            "temperature_start": self.schedule.start,
            "temperature_end": self.schedule.end,
            "max_tokens": self.max_tokens,
            "beam_width": self.beam_width,
            "length_penalty": self.length_penalty,
            "require_all": self.require_all,
            "single_prompt": self.single_prompt,
            "retrieval_char_budget": self.retrieval_char_budget,
            "generation_char_budget": self.generation_char_budget,
            "discipline": self.domain.discipline,
            "subfield": self.domain.subfield,
            "template": self.template,
        }

    def fingerprint(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False,
                           separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class EngineDeps:
    index: VectorIndex
    gateway: Gateway
    classifier: ClassifierBackend
    evaluator: EvaluatorBackend
    theme_graph: ThemeGraph | None = None


@dataclass(frozen=True)
class DocEvaluation:
    chunk_id: str
    first_seen_iteration: int
    retrieval_rank: int                  # rank within the round that first found it
    scores: RelevanceVector
    aggregate: float
    pass_bits: tuple[bool, ...]
    overall_pass: bool
    prompt: str | None = None
    answer: str | None = None
    request_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "first_seen_iteration": self.first_seen_iteration,
            "retrieval_rank": self.retrieval_rank,
            "scores": list(self.scores.s),
            "aggregate": self.aggregate,
            "pass_bits": [int(b) for b in self.pass_bits],
            "overall_pass": self.overall_pass,
            "prompt": self.prompt,
            "answer": self.answer,
            "request_id": self.request_id,
        }


@dataclass
class IterationTrace:
    index: int
    query_text: str
    temperature: float
    hits: list[RetrievalHit] = field(default_factory=list)
    docs: list[DocEvaluation] = field(default_factory=list)
    expansion_keywords: str | None = None
    halt_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "query_text": self.query_text,
            "temperature": self.temperature,
            "hits": [h.to_dict() for h in self.hits],
            "docs": [d.to_dict() for d in self.docs],
            "expansion_keywords": self.expansion_keywords,
            "halt_reason": self.halt_reason,
        }


@dataclass(frozen=True)
class AnswerRecord:
    text: str
    supporting_chunks: tuple[str, ...]
    aggregate_score: float | None
    iteration: int
    abstained: bool = False

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "supporting_chunks": list(self.supporting_chunks),
            "aggregate_score": self.aggregate_score,
            "iteration": self.iteration,
            "abstained": self.abstained,
        }


@dataclass
class QueryTrace:
    query: str
    probs: DimensionProbs
    labels: DimensionLabels
    route: Route
    fallback_simple: bool
    weights: DimensionWeights
    config_fingerprint: str
    iterations: list[IterationTrace] = field(default_factory=list)
    final_prompt: str | None = None
    final_answer: str = ""
    halt_reason: str = ""
    abstained: bool = False

    def to_dict(self) -> dict:
        return {
            "schema": TRACE_SCHEMA,
            "query": self.query,
            "probs": list(self.probs.p),
            "labels": list(self.labels.y),
            "route": self.route.value,
            "fallback_simple": self.fallback_simple,
            "weights": list(self.weights.w),
            "config_fingerprint": self.config_fingerprint,
            "iterations": [it.to_dict() for it in self.iterations],
            "final_prompt": self.final_prompt,
            "final_answer": self.final_answer,
            "halt_reason": self.halt_reason,
            "abstained": self.abstained,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)


@dataclass(frozen=True)
class Candidate:
    answer: str
    aggregate: float
    retrieval_rank: int
    chunk_id: str
    iteration: int


def rank_candidates(candidates: list[Candidate]) -> Candidate | None:
    """Highest aggregate wins; ties go to the earliest retrieval rank, then chunk id."""
    if not candidates:
        return None
    return min(candidates,
               key=lambda c: (-c.aggregate, c.retrieval_rank, c.chunk_id, c.iteration))


def expand_query(x: str, keywords: str) -> str:
    """x + " " + keywords, skipping keyword strings already present in x."""
    keywords = " ".join(keywords.split())
    if not keywords:
        raise ConfigurationError("expand_query requires non-empty keywords")
    if keywords in x:
        return x
    return x + " " + keywords


def _clean_keywords(raw: str) -> str:
    kw = " ".join(raw.split())
    if kw.upper() == "NONE":
        return ""
    return kw


class _Run:
    """Mutable state for one answer() invocation."""

    def __init__(self, query: str, config: PipelineConfig, deps: EngineDeps):
        self.query = query
        self.config = config
        self.deps = deps
        self.request_seq = 0
        self.seen: dict[str, tuple[int, int]] = {}   # chunk_id -> (iteration, rank)
        self.order: list[str] = []                   # first-seen order

    def next_request_id(self) -> str:
        self.request_seq += 1
        return f"g{self.request_seq:04d}"

    def generate(self, prompt: str, temperature: float) -> tuple[str, str]:
        params = GenerationParams(temperature=temperature,
                                  max_tokens=self.config.max_tokens,
                                  beam_width=self.config.beam_width,
                                  length_penalty=self.config.length_penalty)
        request_id = self.next_request_id()
        text = self.deps.gateway.generate(
            GenerationRequest(prompt=prompt, params=params, request_id=request_id))
        return text, request_id

    def absorb_hits(self, iteration: int, hits: list[RetrievalHit]) -> None:
        for hit in hits:
            if hit.chunk_id not in self.seen:
                self.seen[hit.chunk_id] = (iteration, hit.rank)
                self.order.append(hit.chunk_id)


def _evidence_for(doc: DocEvaluation, chunk_text: str,
                  active: DimensionLabels) -> EvidenceItem:
    supported = frozenset(d for d in active.active if doc.pass_bits[d.value - 1])
    return EvidenceItem(chunk_id=doc.chunk_id, text=chunk_text,
                        dims=supported, score=doc.aggregate)


def _trim_to_budget(items: list[EvidenceItem], budget: int) -> list[EvidenceItem]:
    """Keep the leading items whose texts fit the budget; never drop the first."""
    kept: list[EvidenceItem] = []
    used = 0
    for item in items:
        if kept and used + len(item.text) > budget:
            break
        kept.append(item)
        used += len(item.text)
    return kept


def answer(query: str, config: PipelineConfig, deps: EngineDeps,
           themes: tuple[str, ...] = (),
           theme_mode: ExpansionMode = ExpansionMode.EQUIVALENT,
           ) -> tuple[AnswerRecord, QueryTrace]:
    """Run the full inference pipeline for one query.

    Returns the chosen answer plus a trace of every step. Backend failures
    propagate with the partial trace attached as `exc.trace`.
    """
    if not query.strip():
        raise ConfigurationError("query must be non-empty")

    probs = deps.classifier.classify(query)
    labels = assign_labels(probs, config.classifier_thresholds)
    r = route(labels)
    fallback_simple = not labels.any_active
    weights = config.weights or DimensionWeights.for_active(labels)

    trace = QueryTrace(query=query, probs=probs, labels=labels, route=r,
                       fallback_simple=fallback_simple, weights=weights,
                       config_fingerprint=config.fingerprint())
    try:
        record = _run_pipeline(trace, query, config, deps, labels, weights, r,
                               themes, theme_mode)
    except GeoragError as exc:
        exc.trace = trace
        raise
    return record, trace


def _run_pipeline(trace: QueryTrace, query: str, config: PipelineConfig,
                  deps: EngineDeps, labels: DimensionLabels, weights: DimensionWeights,
                  r: Route, themes: tuple[str, ...],
                  theme_mode: ExpansionMode) -> AnswerRecord:
    run = _Run(query, config, deps)
    allowed_docs = None
    if r is Route.SIMPLE and themes and deps.theme_graph is not None:
        allowed_docs = set()
        for theme in themes:
            allowed_docs |= expand_retrieval(theme, theme_mode, deps.theme_graph)

    total = 1 if r is Route.SIMPLE else config.max_iterations
    current_query = query
    final_iter: IterationTrace | None = None

    for i in range(total):
        temp = temperature_for(i, total, config.schedule)
        it = IterationTrace(index=i, query_text=current_query, temperature=temp)
        trace.iterations.append(it)
        final_iter = it

        query_vec = deps.gateway.embed_one(current_query)
        it.hits = deps.index.retrieve_topk(query_vec, config.k, allowed_docs=allowed_docs)
        run.absorb_hits(i, it.hits)

        if not run.order:
            it.halt_reason = HALT_NO_EVIDENCE
            break

        max_sd = None
        for chunk_id in run.order:
            chunk = deps.index.get_chunk(chunk_id)
            scores = deps.evaluator.score(current_query, chunk)
            sd = aggregate(scores, weights)
            decision = passes_thresholds(scores, config.thresholds, labels,
                                         require_all=config.require_all)
            seen_iter, seen_rank = run.seen[chunk_id]
            doc = DocEvaluation(chunk_id=chunk_id, first_seen_iteration=seen_iter,
                                retrieval_rank=seen_rank, scores=scores, aggregate=sd,
                                pass_bits=decision.pass_bits,
                                overall_pass=decision.overall)
            if not config.single_prompt:
                item = _evidence_for(doc, chunk.text, labels)
                prompt_text = build_geoprompt(
                    GeoPrompt(user_query=current_query,
                              question_type=frozenset(labels.active),
                              domain_context=config.domain,
                              knowledge_text=(item,)),
                    template=config.template,
                    max_chars=config.generation_char_budget)
                answer_text, request_id = run.generate(prompt_text, temp)
                doc = replace(doc, prompt=prompt_text, answer=answer_text,
                              request_id=request_id)
            it.docs.append(doc)
            max_sd = sd if max_sd is None else max(max_sd, sd)

        if r is Route.SIMPLE:
            it.halt_reason = HALT_SIMPLE
            break
        if max_sd is not None and max_sd >= config.recursion_trigger_threshold:
            it.halt_reason = HALT_SCORE
            break
        if i + 1 >= total:
            it.halt_reason = HALT_BUDGET
            break

        raw, _ = run.generate(KEYWORD_INSTRUCTION + "\n" + current_query, temp)
        keywords = _clean_keywords(raw)
        it.expansion_keywords = keywords
        if not keywords:
            it.halt_reason = HALT_EMPTY_KEYWORDS
            break
        expanded = expand_query(current_query, keywords)
        if expanded == current_query:
            it.halt_reason = HALT_UNCHANGED
            break
        current_query = expanded

    assert final_iter is not None
    trace.halt_reason = final_iter.halt_reason or ""
    record = _final_answer(run, trace, final_iter, labels, config, deps)
    trace.final_answer = record.text
    trace.abstained = record.abstained
    return record


def _abstain(iteration: int) -> AnswerRecord:
    return AnswerRecord(text=ABSTENTION_TEXT, supporting_chunks=(),
                        aggregate_score=None, iteration=iteration, abstained=True)


def _final_answer(run: _Run, trace: QueryTrace, final_iter: IterationTrace,
                  labels: DimensionLabels, config: PipelineConfig,
                  deps: EngineDeps) -> AnswerRecord:
    passing = [d for d in final_iter.docs if d.overall_pass]
    if not passing:
        return _abstain(final_iter.index)

    if not config.single_prompt:
        best = rank_candidates([
            Candidate(answer=d.answer or "", aggregate=d.aggregate,
                      retrieval_rank=d.retrieval_rank, chunk_id=d.chunk_id,
                      iteration=final_iter.index)
            for d in passing
        ])
        assert best is not None
        return AnswerRecord(text=best.answer, supporting_chunks=(best.chunk_id,),
                            aggregate_score=best.aggregate, iteration=best.iteration)

    ranked = sorted(passing, key=lambda d: (-d.aggregate, d.retrieval_rank, d.chunk_id))
    items = [_evidence_for(d, deps.index.get_chunk(d.chunk_id).text, labels)
             for d in ranked]
    items = _trim_to_budget(items, config.retrieval_char_budget)
    prompt_text = build_geoprompt(
        GeoPrompt(user_query=final_iter.query_text,
                  question_type=frozenset(labels.active),
                  domain_context=config.domain,
                  knowledge_text=tuple(items)),
        template=config.template,
        max_chars=config.generation_char_budget)
    answer_text, _ = run.generate(prompt_text, final_iter.temperature)
    trace.final_prompt = prompt_text
    kept_ids = {item.chunk_id for item in items}
    supporting = tuple(d.chunk_id for d in ranked if d.chunk_id in kept_ids)
    return AnswerRecord(text=answer_text, supporting_chunks=supporting,
                        aggregate_score=ranked[0].aggregate,
                        iteration=final_iter.index)


def iterative_retrieve(query: str, budget: int, config: PipelineConfig,
                       deps: EngineDeps) -> tuple[list[str], list[list[RetrievalHit]]]:
    """Retrieval-only expansion loop.

    Runs up to `budget` rounds of retrieve + keyword expansion and returns the
    deduplicated chunk ids in first-seen order plus per-round hit provenance.
    """
    if budget < 1:
        raise ConfigurationError("budget must be >= 1")
    if not query.strip():
        raise ConfigurationError("query must be non-empty")
    run = _Run(query, config, deps)
    rounds: list[list[RetrievalHit]] = []
    current_query = query
    for i in range(budget):
        temp = temperature_for(i, budget, config.schedule)
        query_vec = deps.gateway.embed_one(current_query)
        hits = deps.index.retrieve_topk(query_vec, config.k)
        rounds.append(hits)
        run.absorb_hits(i, hits)
        if i + 1 >= budget or not hits:
            break
        raw, _ = run.generate(KEYWORD_INSTRUCTION + "\n" + current_query, temp)
        keywords = _clean_keywords(raw)
        if not keywords:
            break
        expanded = expand_query(current_query, keywords)
        if expanded == current_query:
            break
        current_query = expanded
    return list(run.order), rounds
