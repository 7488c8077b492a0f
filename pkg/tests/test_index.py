from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from georag.errors import ConfigurationError, MissingArtifactError, SchemaError
from georag.index import (
    ExpansionMode,
    ThemeGraph,
    VectorIndex,
    cosine_similarity,
    expand_retrieval,
)

from conftest import make_chunk


# --- Cosine ------------------------------------------------------------------

def test_cosine_hand_value():
    assert cosine_similarity([1.0, 2.0, 2.0], [2.0, 1.0, 2.0]) == pytest.approx(
        8 / 9, abs=1e-12)


def test_cosine_zero_vector_rejected():
    with pytest.raises(ConfigurationError):
        cosine_similarity([0.0, 0.0], [1.0, 1.0])


def test_cosine_dimension_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        cosine_similarity([1.0, 2.0], [1.0, 2.0, 3.0])


_COMPONENT = st.floats(min_value=-50, max_value=50, allow_nan=False)


def _nonzero(vec):
    return any(v != 0.0 for v in vec)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=2, max_value=20), st.data())
def test_cosine_symmetry_scale_and_range(dim, data):
    a = data.draw(st.lists(_COMPONENT, min_size=dim, max_size=dim).filter(_nonzero))
    b = data.draw(st.lists(_COMPONENT, min_size=dim, max_size=dim).filter(_nonzero))
    c = data.draw(st.floats(min_value=0.25, max_value=8.0))
    sim = cosine_similarity(a, b)
    assert -1.0 - 1e-9 <= sim <= 1.0 + 1e-9
    assert cosine_similarity(b, a) == pytest.approx(sim, abs=1e-12)
    assert cosine_similarity([c * x for x in a], b) == pytest.approx(sim, abs=1e-9)


def test_cosine_self_similarity_is_one():
    vec = [0.3, -0.7, 1.1, 4.0]
    assert cosine_similarity(vec, vec) == pytest.approx(1.0, abs=1e-12)


def test_cosine_survives_magnitudes_whose_squares_leave_float_range():
    # squaring 1e-213 underflows to 0.0 and squaring 1e200 overflows to inf;
    # neither vector is zero, so both must get the scale-invariant answer
    assert cosine_similarity([0.0, 1.0], [0.0, 2.5e-213]) == pytest.approx(
        1.0, abs=1e-12)
    assert cosine_similarity([1e200, 0.0], [1.0, 0.0]) == pytest.approx(
        1.0, abs=1e-12)
    tiny = cosine_similarity([3e-200, 4e-200], [4e160, 3e160])
    assert tiny == pytest.approx(24 / 25, abs=1e-12)
    assert math.isfinite(cosine_similarity([1e308, 1e308], [1e308, -1e308]))
    with pytest.raises(ConfigurationError):
        cosine_similarity([0.0, 0.0], [1e-213, 0.0])


# --- VectorIndex -------------------------------------------------------------

def _tiny_index():
    index = VectorIndex(seed=3)
    index.upsert(make_chunk("a#0-1", "alpha text"), [1.0, 0.0])
    index.upsert(make_chunk("b#0-1", "beta text"), [0.0, 1.0])
    index.upsert(make_chunk("c#0-1", "gamma text"), [1.0, 1.0])
    return index


def test_upsert_same_id_replaces_without_growth():
    index = _tiny_index()
    index.upsert(make_chunk("a#0-1", "alpha text"), [0.5, 0.5])
    assert len(index) == 3
    assert index.get_vector("a#0-1") == [0.5, 0.5]


def test_upsert_zero_vector_rejected():
    index = _tiny_index()
    with pytest.raises(ConfigurationError):
        index.upsert(make_chunk("z#0-1", "zero"), [0.0, 0.0])


def test_upsert_dimension_mismatch_rejected():
    index = _tiny_index()
    with pytest.raises(ConfigurationError):
        index.upsert(make_chunk("z#0-1", "short"), [1.0, 2.0, 3.0])


def test_topk_exceeding_size_returns_all_sorted():
    index = _tiny_index()
    hits = index.retrieve_topk([1.0, 0.0], k=10)
    assert [h.chunk_id for h in hits] == ["a#0-1", "c#0-1", "b#0-1"]
    assert [h.rank for h in hits] == [1, 2, 3]
    assert hits[0].score == pytest.approx(1.0)


def test_topk_tie_breaks_on_ascending_chunk_id():
    index = VectorIndex()
    index.upsert(make_chunk("zz#0-1", "z"), [1.0, 0.0])
    index.upsert(make_chunk("aa#0-1", "a"), [2.0, 0.0])
    hits = index.retrieve_topk([1.0, 0.0], k=2)
    assert [h.chunk_id for h in hits] == ["aa#0-1", "zz#0-1"]


def test_topk_k_must_be_positive():
    with pytest.raises(ConfigurationError):
        _tiny_index().retrieve_topk([1.0, 0.0], k=0)


def test_topk_on_empty_index_is_empty():
    assert VectorIndex().retrieve_topk([1.0], k=5) == []


def test_topk_allowed_docs_filter():
    index = _tiny_index()
    hits = index.retrieve_topk([1.0, 0.0], k=5, allowed_docs={"b"})
    assert [h.chunk_id for h in hits] == ["b#0-1"]


def _random_corpus(rng, size, dim):
    index = VectorIndex()
    vectors = {}
    for i in range(size):
        vec = [rng.uniform(-1, 1) for _ in range(dim)]
        if not any(vec):
            vec[0] = 1.0
        cid = f"d{i:04d}#0-1"
        index.upsert(make_chunk(cid, f"chunk {i}"), vec)
        vectors[cid] = vec
    return index, vectors


def _exhaustive_topk(vectors, query, k):
    scored = sorted(((-cosine_similarity(query, v), cid) for cid, v in vectors.items()))
    return [cid for _, cid in scored[:k]]


def test_topk_matches_exhaustive_scan():
    rng = random.Random(11)
    for trial in range(20):
        size = rng.randint(1, 60)
        index, vectors = _random_corpus(rng, size, dim=8)
        query = [rng.uniform(-1, 1) for _ in range(8)]
        query[0] = query[0] or 1.0
        for k in (1, 5, 50):
            hits = index.retrieve_topk(query, k)
            assert [h.chunk_id for h in hits] == _exhaustive_topk(vectors, query, k)


def test_save_load_round_trip(tmp_path):
    rng = random.Random(5)
    index, vectors = _random_corpus(rng, 12, dim=6)
    path = tmp_path / "idx.bin"
    index.save(path)
    loaded = VectorIndex.load(path)
    assert len(loaded) == len(index)
    assert loaded.seed == index.seed
    assert loaded.dim == index.dim
    for chunk in index.chunks():
        assert loaded.get_chunk(chunk.chunk_id) == chunk
        got = loaded.get_vector(chunk.chunk_id)
        want = vectors[chunk.chunk_id]
        assert got == pytest.approx(want, abs=1e-6)


def test_load_missing_file_is_missing_artifact(tmp_path):
    with pytest.raises(MissingArtifactError):
        VectorIndex.load(tmp_path / "absent.bin")


def test_load_corrupt_header_is_schema_error(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not json\nrest")
    with pytest.raises(SchemaError):
        VectorIndex.load(path)


def test_retrieval_unchanged_after_round_trip(tmp_path):
    rng = random.Random(17)
    index, _ = _random_corpus(rng, 30, dim=8)
    query = [rng.uniform(-1, 1) for _ in range(8)]
    path = tmp_path / "idx.bin"
    index.save(path)
    loaded = VectorIndex.load(path)
    # float32 storage perturbs scores, but well-separated random vectors keep order
    assert ([h.chunk_id for h in loaded.retrieve_topk(query, 10)]
            == [h.chunk_id for h in index.retrieve_topk(query, 10)])


# --- Theme graph -------------------------------------------------------------

@pytest.fixture
def graph():
    return ThemeGraph(
        nodes={"land", "coast", "dune", "cliff", "marsh", "shoreline"},
        parent={"coast": "land", "dune": "coast", "cliff": "coast", "marsh": "coast"},
        equiv_links=[("coast", "shoreline")],
        attachments={"land": {"doc-land"}, "coast": {"doc-coast"},
                     "dune": {"doc-dune"}, "cliff": {"doc-cliff"},
                     "marsh": {"doc-marsh"}, "shoreline": {"doc-shore"}},
    )


def test_theme_graph_rejects_unknown_parent():
    with pytest.raises(SchemaError):
        ThemeGraph(nodes={"a"}, parent={"a": "ghost"})


def test_theme_graph_rejects_cycles():
    with pytest.raises(SchemaError):
        ThemeGraph(nodes={"a", "b"}, parent={"a": "b", "b": "a"})


def test_theme_graph_rejects_unknown_equivalence():
    with pytest.raises(SchemaError):
        ThemeGraph(nodes={"a"}, equiv_links=[("a", "ghost")])


def test_theme_graph_json_round_trip(graph):
    again = ThemeGraph.from_json(graph.to_json())
    assert again.nodes == graph.nodes
    assert again.parent == graph.parent
    assert sorted(map(sorted, again.equiv_links)) == sorted(map(sorted, graph.equiv_links))
    assert again.attachments == graph.attachments


def test_root_has_no_direct_parent_docs(graph):
    assert expand_retrieval("land", ExpansionMode.DIRECT_PARENT, graph) == set()


def test_equivalent_mode_unions_linked_docs(graph):
    assert expand_retrieval("coast", ExpansionMode.EQUIVALENT, graph) == {
        "doc-coast", "doc-shore"}


def test_direct_parent_docs(graph):
    assert expand_retrieval("dune", ExpansionMode.DIRECT_PARENT, graph) == {"doc-coast"}


def test_indirect_parent_docs(graph):
    assert expand_retrieval("dune", ExpansionMode.INDIRECT_PARENT, graph) == {
        "doc-coast", "doc-land"}


def test_direct_child_docs(graph):
    assert expand_retrieval("land", ExpansionMode.DIRECT_CHILD, graph) == {"doc-coast"}


def test_indirect_child_docs(graph):
    assert expand_retrieval("land", ExpansionMode.INDIRECT_CHILD, graph) == {
        "doc-coast", "doc-dune", "doc-cliff", "doc-marsh"}


def test_unknown_theme_rejected(graph):
    with pytest.raises(ConfigurationError):
        expand_retrieval("ocean", ExpansionMode.EQUIVALENT, graph)


def test_equivalence_class_contains_theme_itself(graph):
    assert "dune" in graph.equivalence_class("dune")


def test_indirect_modes_contain_direct_modes(graph):
    for theme in graph.nodes:
        direct_p = expand_retrieval(theme, ExpansionMode.DIRECT_PARENT, graph)
        indirect_p = expand_retrieval(theme, ExpansionMode.INDIRECT_PARENT, graph)
        assert direct_p <= indirect_p
        direct_c = expand_retrieval(theme, ExpansionMode.DIRECT_CHILD, graph)
        indirect_c = expand_retrieval(theme, ExpansionMode.INDIRECT_CHILD, graph)
        assert direct_c <= indirect_c


def test_equivalence_links_are_transitive():
    graph = ThemeGraph(nodes={"a", "b", "c"}, equiv_links=[("a", "b"), ("b", "c")],
                       attachments={"a": {"da"}, "b": {"db"}, "c": {"dc"}})
    assert expand_retrieval("a", ExpansionMode.EQUIVALENT, graph) == {"da", "db", "dc"}
