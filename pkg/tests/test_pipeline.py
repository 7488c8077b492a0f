from __future__ import annotations

from pathlib import Path

import pytest

from georag.classify import Dimension, GatewayClassifier, Route
from georag.errors import ConfigurationError, ProtocolError
from georag.evaluate import DimensionWeights, ThresholdVector
from georag.index import VectorIndex
from georag.modelgw import Gateway, StubScript
from georag.pipeline import (
    ABSTENTION_TEXT,
    HALT_BUDGET,
    HALT_EMPTY_KEYWORDS,
    HALT_NO_EVIDENCE,
    HALT_SCORE,
    HALT_SIMPLE,
    HALT_UNCHANGED,
    Candidate,
    EngineDeps,
    PipelineConfig,
    answer,
    expand_query,
    iterative_retrieve,
    rank_candidates,
)

from conftest import (
    BASIN_QUERY,
    FixedClassifier,
    basin_scenario,
    basin_script,
    build_index,
    make_chunk,
    scripted_deps,
)

GOLDEN_DIR = Path(__file__).parent / "goldens"


def _location_probs():
    return [0.0, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0]


def _simple_deps(n_chunks=6, score_default=None):
    chunks = [make_chunk(f"d{i}#0-1", f"chunk number {i} describes the shoreline")
              for i in range(n_chunks)]
    script = StubScript(score_default=score_default or [0.95] * 7)
    gateway = Gateway.stub(script)
    deps = scripted_deps(build_index(chunks, gateway), script,
                         classifier=FixedClassifier(_location_probs()))
    return deps


# --- expand_query ----------------------------------------------------------------

def test_expand_query_concatenates():
    assert expand_query("how did the basin form", "vertical tectonics") == \
        "how did the basin form vertical tectonics"


def test_expand_query_skips_keywords_already_present():
    q = "how did the basin form"
    assert expand_query(q, "basin form") == q


def test_expand_query_normalizes_keyword_whitespace():
    assert expand_query("query", "  a   b ") == "query a b"


def test_expand_query_requires_keywords():
    with pytest.raises(ConfigurationError):
        expand_query("query", "   ")


# --- rank_candidates ---------------------------------------------------------------

def _cand(answer_text, aggregate, rank, chunk_id, iteration=0):
    return Candidate(answer=answer_text, aggregate=aggregate, retrieval_rank=rank,
                     chunk_id=chunk_id, iteration=iteration)


def test_rank_empty_returns_none():
    assert rank_candidates([]) is None


def test_rank_single_candidate_wins():
    c = _cand("a", 0.4, 3, "x#0-1")
    assert rank_candidates([c]) is c


def test_rank_highest_aggregate_wins():
    picked = rank_candidates([
        _cand("first", 0.2, 1, "a#0-1"),
        _cand("second", 0.9, 2, "b#0-1"),
        _cand("third", 0.5, 3, "c#0-1"),
    ])
    assert picked.answer == "second"


def test_rank_ties_break_on_retrieval_rank():
    picked = rank_candidates([
        _cand("late", 0.9, 4, "a#0-1"),
        _cand("early", 0.9, 2, "b#0-1"),
    ])
    assert picked.answer == "early"


def test_rank_equal_rank_breaks_on_chunk_id():
    picked = rank_candidates([
        _cand("zz", 0.9, 1, "z#0-1"),
        _cand("aa", 0.9, 1, "a#0-1"),
    ])
    assert picked.answer == "aa"


# --- Routing and iteration counts -----------------------------------------------------

def test_simple_route_runs_exactly_one_iteration():
    deps = _simple_deps()
    record, trace = answer("where is the shoreline", PipelineConfig(k=5), deps)
    assert trace.route is Route.SIMPLE
    assert trace.halt_reason == HALT_SIMPLE
    assert len(trace.iterations) == 1
    assert len(trace.iterations[0].hits) == 5
    assert not record.abstained


def test_simple_route_weights_concentrate_on_active_dims():
    deps = _simple_deps()
    _, trace = answer("where is the shoreline", PipelineConfig(), deps)
    assert trace.weights.w == DimensionWeights.for_active(trace.labels).w


def test_fallback_simple_when_no_dimension_is_active():
    deps = _simple_deps()
    deps.classifier = FixedClassifier([0.0] * 7)
    _, trace = answer("anything", PipelineConfig(), deps)
    assert trace.fallback_simple is True
    assert trace.route is Route.SIMPLE
    assert trace.weights.w == DimensionWeights.uniform().w


def test_composite_route_expands_query_with_keywords():
    query, config, deps = basin_scenario()
    _, trace = answer(query, config, deps)
    assert trace.route is Route.COMPOSITE
    assert trace.iterations[0].expansion_keywords == "vertical tectonics subsidence"
    assert trace.iterations[1].query_text == \
        "how did the basin form vertical tectonics subsidence"


def test_recursion_stops_once_scores_clear_trigger():
    query, config, deps = basin_scenario()
    _, trace = answer(query, config, deps)
    assert trace.halt_reason == HALT_SCORE
    assert len(trace.iterations) == 2
    assert max(d.aggregate for d in trace.iterations[0].docs) < 0.5
    assert max(d.aggregate for d in trace.iterations[1].docs) >= 0.5


def test_max_iterations_one_disables_recursion():
    query, _, deps = basin_scenario()
    config = PipelineConfig(k=2, max_iterations=1, recursion_trigger_threshold=0.5)
    _, trace = answer(query, config, deps)
    assert len(trace.iterations) == 1
    assert trace.halt_reason == HALT_BUDGET
    assert trace.iterations[0].expansion_keywords is None


def test_budget_exhaustion_after_repeated_expansion():
    script = basin_script()
    script.generate_rules[0] = ("Propose additional search keywords", "KEYWORD")
    # one fresh keyword per round: the stub returns the same token, so round
    # two leaves the query unchanged; force budget halt with max_iterations=2
    gateway = Gateway.stub(script)
    chunks = [make_chunk("b#0-1", "basin fill")]
    deps = EngineDeps(index=build_index(chunks, gateway), gateway=gateway,
                      classifier=FixedClassifier([0, 0, 0, 0, 0, 0.9, 0]),
                      evaluator=scripted_deps(build_index(chunks, gateway), script).evaluator)
    config = PipelineConfig(k=1, max_iterations=2, recursion_trigger_threshold=0.5)
    _, trace = answer("basin question", config, deps)
    assert trace.halt_reason == HALT_BUDGET
    assert len(trace.iterations) == 2


def test_empty_keyword_reply_halts():
    script = basin_script()
    script.generate_rules[0] = ("Propose additional search keywords", "NONE")
    gateway = Gateway.stub(script)
    chunks = [make_chunk(cid, text) for cid, text in
              [("basin#0-2", "The basin floor dropped along deep faults.")]]
    deps = EngineDeps(index=build_index(chunks, gateway), gateway=gateway,
                      classifier=GatewayClassifier(gateway),
                      evaluator=scripted_deps(build_index(chunks, gateway), script).evaluator)
    _, trace = answer(BASIN_QUERY, PipelineConfig(k=1, max_iterations=3), deps)
    assert trace.halt_reason == HALT_EMPTY_KEYWORDS
    assert trace.iterations[0].expansion_keywords == ""


def test_echoing_backend_halts_query_unchanged():
    script = StubScript(classify_rules=[("basin", [0, 0, 0, 0, 0, 0.9, 0])],
                        score_default=[0.1] * 7)
    gateway = Gateway.stub(script)
    chunks = [make_chunk("basin#0-2", "The basin floor dropped along deep faults.")]
    deps = EngineDeps(index=build_index(chunks, gateway), gateway=gateway,
                      classifier=GatewayClassifier(gateway),
                      evaluator=scripted_deps(build_index(chunks, gateway), script).evaluator)
    _, trace = answer(BASIN_QUERY, PipelineConfig(k=1, max_iterations=3), deps)
    # the echo default returns the query itself, which expand_query drops
    assert trace.halt_reason == HALT_UNCHANGED
    assert trace.iterations[0].expansion_keywords == BASIN_QUERY


def test_empty_index_halts_with_abstention():
    script = StubScript()
    gateway = Gateway.stub(script)
    deps = EngineDeps(index=VectorIndex(), gateway=gateway,
                      classifier=FixedClassifier(_location_probs()),
                      evaluator=scripted_deps(VectorIndex(), script).evaluator)
    record, trace = answer("where is it", PipelineConfig(), deps)
    assert trace.halt_reason == HALT_NO_EVIDENCE
    assert record.abstained is True
    assert record.text == ABSTENTION_TEXT
    assert record.supporting_chunks == ()
    assert record.aggregate_score is None


def test_abstention_when_no_document_passes_thresholds():
    deps = _simple_deps(score_default=[0.5] * 7)
    record, trace = answer("where is the shoreline", PipelineConfig(), deps)
    assert record.abstained is True
    assert trace.abstained is True
    assert trace.final_answer == ABSTENTION_TEXT


def test_answer_rejects_empty_query():
    deps = _simple_deps()
    with pytest.raises(ConfigurationError):
        answer("   ", PipelineConfig(), deps)


# --- Evidence accumulation ---------------------------------------------------------

def test_accumulated_evidence_never_shrinks():
    query, config, deps = basin_scenario()
    _, trace = answer(query, config, deps)
    seen_per_iter = [set(d.chunk_id for d in it.docs) for it in trace.iterations]
    for earlier, later in zip(seen_per_iter, seen_per_iter[1:]):
        assert earlier <= later


def test_accumulated_docs_rescored_against_current_query():
    query, config, deps = basin_scenario()
    _, trace = answer(query, config, deps)
    first = {d.chunk_id: d.aggregate for d in trace.iterations[0].docs}
    second = {d.chunk_id: d.aggregate for d in trace.iterations[1].docs}
    for chunk_id in first:
        assert second[chunk_id] != first[chunk_id]


def test_final_answer_ranked_over_final_iteration_docs():
    query, config, deps = basin_scenario()
    record, trace = answer(query, config, deps)
    final_docs = trace.iterations[-1].docs
    passing = [d for d in final_docs if d.overall_pass]
    assert record.supporting_chunks[0] in {d.chunk_id for d in passing}
    # tie on aggregate: the earliest retrieval rank wins
    assert record.supporting_chunks == ("basin#0-2",)
    assert record.aggregate_score == pytest.approx(0.95)


def test_trace_is_deterministic_across_runs():
    query, config, deps = basin_scenario()
    _, first = answer(query, config, deps)
    query2, config2, deps2 = basin_scenario()
    _, second = answer(query2, config2, deps2)
    assert first.to_json() == second.to_json()


def test_full_trace_matches_golden():
    query, config, deps = basin_scenario()
    _, trace = answer(query, config, deps)
    golden = (GOLDEN_DIR / "ask_trace.json").read_text(encoding="utf-8")
    assert trace.to_json() + "\n" == golden


def test_request_ids_are_sequential():
    query, config, deps = basin_scenario()
    _, trace = answer(query, config, deps)
    ids = [d.request_id for it in trace.iterations for d in it.docs]
    assert ids == ["g0001", "g0002", "g0004", "g0005", "g0006"]


def test_partial_trace_attached_to_backend_failures():
    chunks = [make_chunk("d#0-1", "some shoreline text")]
    script = StubScript(score_rules=[("shoreline", [1.5, 0, 0, 0, 0, 0, 0])])
    gateway = Gateway.stub(script)
    deps = scripted_deps(build_index(chunks, gateway), script,
                         classifier=FixedClassifier(_location_probs()))
    with pytest.raises(ProtocolError) as err:
        answer("where is the shoreline", PipelineConfig(), deps)
    trace = err.value.trace
    assert trace.query == "where is the shoreline"
    assert len(trace.iterations) == 1


# --- Single prompt mode ----------------------------------------------------------------

def test_single_prompt_mode_builds_one_final_prompt():
    query, _, deps = basin_scenario()
    config = PipelineConfig(k=2, max_iterations=3, recursion_trigger_threshold=0.5,
                            single_prompt=True)
    record, trace = answer(query, config, deps)
    assert trace.final_prompt is not None
    assert record.supporting_chunks == ("basin#0-2", "basin#2-4", "coast#0-2")
    assert trace.final_prompt.count("[Evolution]") == 3
    for it in trace.iterations:
        for doc in it.docs:
            assert doc.prompt is None and doc.answer is None


def test_single_prompt_respects_retrieval_budget():
    query, _, deps = basin_scenario()
    config = PipelineConfig(k=2, max_iterations=3, recursion_trigger_threshold=0.5,
                            single_prompt=True, retrieval_char_budget=10)
    record, trace = answer(query, config, deps)
    # the first-ranked doc always survives the budget
    assert record.supporting_chunks == ("basin#0-2",)


# --- Theme-filtered retrieval ------------------------------------------------------------

def test_simple_route_honours_theme_filter():
    from georag.index import ThemeGraph

    script = StubScript(score_default=[0.95] * 7)
    gateway = Gateway.stub(script)
    chunks = [make_chunk("a#0-1", "alpha shoreline text", doc_id="a"),
              make_chunk("b#0-1", "beta shoreline text", doc_id="b")]
    graph = ThemeGraph(nodes={"coastal"}, attachments={"coastal": {"b"}})
    deps = scripted_deps(build_index(chunks, gateway), script,
                         classifier=FixedClassifier(_location_probs()))
    deps.theme_graph = graph
    record, trace = answer("where is the shoreline", PipelineConfig(), deps,
                           themes=("coastal",))
    assert [h.chunk_id for h in trace.iterations[0].hits] == ["b#0-1"]
    assert record.supporting_chunks == ("b#0-1",)


# --- iterative_retrieve ---------------------------------------------------------------

def test_budget_one_equals_plain_retrieval():
    query, config, deps = basin_scenario()
    ids, rounds = iterative_retrieve(query, 1, config, deps)
    direct = deps.index.retrieve_topk(deps.gateway.embed_one(query), config.k)
    assert ids == [h.chunk_id for h in direct]
    assert len(rounds) == 1
    assert rounds[0] == direct


def test_duplicate_hits_dedup_in_ids_but_kept_in_provenance():
    query, config, deps = basin_scenario()
    ids, rounds = iterative_retrieve(query, 2, config, deps)
    assert len(rounds) == 2
    flat = [h.chunk_id for hits in rounds for h in hits]
    assert len(ids) == len(set(flat))
    dupes = {cid for cid in flat if flat.count(cid) > 1}
    assert "basin#0-2" in dupes
    assert ids.count("basin#0-2") == 1


def test_iterative_retrieve_validates_inputs():
    query, config, deps = basin_scenario()
    with pytest.raises(ConfigurationError):
        iterative_retrieve(query, 0, config, deps)
    with pytest.raises(ConfigurationError):
        iterative_retrieve(" ", 1, config, deps)


# --- Config validation --------------------------------------------------------------------

def test_pipeline_config_validation():
    with pytest.raises(ConfigurationError):
        PipelineConfig(k=0)
    with pytest.raises(ConfigurationError):
        PipelineConfig(max_iterations=0)
    with pytest.raises(ConfigurationError):
        PipelineConfig(retrieval_char_budget=0)


def test_fingerprint_tracks_config_changes():
    base = PipelineConfig()
    assert base.fingerprint() == PipelineConfig().fingerprint()
    assert base.fingerprint() != PipelineConfig(k=7).fingerprint()
    assert base.fingerprint() != PipelineConfig(
        thresholds=ThresholdVector((0.5,) * 7)).fingerprint()
