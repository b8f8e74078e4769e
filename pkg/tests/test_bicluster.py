import io
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flowvote.bicluster import (BEST_SCORE, FEATURE, FLOW, THRESHOLD_STOP, BipartiteGraph, Subgraph,
                                Vertex, build_bigraph, linkage, peel, replay, score, stop_count)
from flowvote.errors import InvalidParameter, NonNegativityViolation, UnknownVertex

from helpers import check_trace, exhaustive_best_score

dyadic = st.integers(0, 16).map(lambda k: k / 8)


def small_graphs(max_vertices=10):
    return st.integers(1, max_vertices - 1).flatmap(
        lambda n: st.integers(1, max_vertices - n).flatmap(
            lambda m: arrays(float, (n, m), elements=dyadic)))


# --- construction -------------------------------------------------------------------

def test_fig2_layout_sizes(rng):
    g = build_bigraph(rng.random((10, 5)))
    assert (g.n_flows, g.n_features, g.num_nodes()) == (10, 5, 15)


def test_zero_matrix_and_negative_entry():
    g = build_bigraph(np.zeros((3, 2)))
    assert g.n_edges == 0
    assert all(g.neighbors(v) == [] for v in g.vertices())
    w = np.full((2, 2), 0.5)
    w[1, 0] = -0.1
    with pytest.raises(NonNegativityViolation):
        build_bigraph(w)


def test_edges_only_between_sides(rng):
    w = rng.random((5, 4)) * (rng.random((5, 4)) > 0.4)
    g = build_bigraph(w)
    for v in g.vertices():
        assert all(u.kind != v.kind for u, _ in g.neighbors(v))
    assert g.n_edges == np.count_nonzero(w)


def test_labels_from_feature_matrix():
    from flowvote.features import FeatureMatrix
    g = build_bigraph(FeatureMatrix(["a", "b"], ["x"], [[1.0], [0.0]], "normalized-l1-columns"))
    assert g.vertex_label(Vertex(FLOW, 1)) == "b"
    assert g.vertex_label(Vertex(FEATURE, 0)) == "x"


# --- linkage and score ----------------------------------------------------------------

def test_linkage_examples():
    g = build_bigraph(np.array([[0.5, 0.7], [0.0, 0.0]]))
    assert linkage(g, Vertex(FLOW, 0)) == pytest.approx(1.2, abs=1e-15)
    assert linkage(g, Vertex(FLOW, 1)) == 0
    before = linkage(g, Vertex(FLOW, 0))
    g.delete(Vertex(FEATURE, 1))
    assert before - linkage(g, Vertex(FLOW, 0)) == pytest.approx(0.7, abs=1e-15)
    with pytest.raises(UnknownVertex):
        linkage(g, Vertex(FEATURE, 1))
    with pytest.raises(UnknownVertex):
        linkage(g, Vertex(FLOW, 9))


def test_score_examples(rng):
    g = build_bigraph(np.array([[0.3]]))
    assert score(g) == 0.3
    assert score(Subgraph(g, (), (), 0.0)) == 0.0
    w = rng.random((6, 3))
    brute = min(list(w.sum(axis=1)) + list(w.sum(axis=0)))
    assert score(build_bigraph(w)) == pytest.approx(brute, abs=1e-12)
    sub = Subgraph(build_bigraph(w), (0, 2), (1,), 0.0)
    assert score(sub) == pytest.approx(min(w[0, 1], w[2, 1], w[0, 1] + w[2, 1]), abs=1e-15)


def test_subgraph_edges_are_induced(rng):
    w = rng.random((4, 3)) * (rng.random((4, 3)) > 0.3)
    sub = Subgraph(build_bigraph(w), (0, 3), (0, 2), 0.0)
    expect = {(i, j) for i in (0, 3) for j in (0, 2) if w[i, j] > 0}
    assert {(i, j) for i, j, _ in sub.edges()} == expect


@given(small_graphs(12), st.lists(st.integers(0, 20), max_size=12))
def test_incremental_degrees_match_recompute(w, picks):
    g = build_bigraph(w)
    for p in picks:
        verts = g.vertices()
        if not verts:
            break
        g.delete(verts[p % len(verts)])
        for v in g.vertices():
            assert abs(g.degree(v) - linkage(g, v)) <= 1e-9


# --- peeling ----------------------------------------------------------------------------

def test_stop_count_uses_decimal_threshold():
    assert stop_count(1000, 0.055) == 55
    assert stop_count(15, 0.055) == 1
    assert stop_count(7, 0.5) == 4


def test_thousand_vertices_stop_at_55(rng):
    g = build_bigraph(rng.random((900, 100)) * (rng.random((900, 100)) > 0.7))
    sub, flows, trace = peel(g, 0.055, THRESHOLD_STOP)
    assert len(sub) == 55
    assert len(trace) == 945
    assert flows == [g.flow_ids[i] for i in sub.flows]
    assert g.num_nodes() == 1000  # input untouched


def test_six_by_three_dense_pair():
    w = np.full((6, 3), 0.05)
    w[4:] = 0.9
    sub, flows, trace = peel(build_bigraph(w), 0.055, BEST_SCORE)
    assert sub.flows == (4, 5)
    assert flows == ["4", "5"]
    assert sub.score == pytest.approx(exhaustive_best_score(w), abs=1e-12)
    check_trace(build_bigraph(w), trace)


def test_complete_bipartite_ties_ascending_index():
    g = build_bigraph(np.ones((4, 4)))
    _, _, trace = peel(g, 0.5, THRESHOLD_STOP)
    order = [v for v, _ in trace.deletions]
    assert order == [Vertex(FLOW, 0), Vertex(FEATURE, 0), Vertex(FLOW, 1), Vertex(FEATURE, 1)]


def test_equal_degree_flow_before_feature():
    g = build_bigraph(np.array([[1.0]]))
    _, _, trace = peel(g, 0.5, THRESHOLD_STOP)
    assert trace.deletions[0][0] == Vertex(FLOW, 0)


def test_trace_shape_and_best_index(rng):
    g = build_bigraph(rng.random((8, 2)))
    sub, _, trace = peel(g, 0.1, BEST_SCORE)
    assert len(trace.scores) == len(trace.deletions) + 1
    k = trace.best_index
    assert trace.scores[k] == max(trace.scores)
    assert trace.scores.index(max(trace.scores)) == k
    assert sub.score == trace.scores[k]
    kept = replay(g, [v for v, _ in trace.deletions[:k]])
    assert set(kept.vertices()) == set(sub.vertices)
    _, _, ts = peel(g, 0.1, THRESHOLD_STOP)
    assert ts.best_index == len(ts.deletions)
    assert ts.deletions == trace.deletions


def test_trace_csv():
    g = build_bigraph(np.array([[1.0, 2.0], [3.0, 0.0]]))
    _, _, trace = peel(g, 0.3, THRESHOLD_STOP)
    buf = io.StringIO()
    trace.write_csv(buf, g)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "step,vertex,kind,degree,score"
    # degrees: flows 3, 3; features 4, 2 -> feature 1 goes first, then flow 0
    assert lines[1:] == ["1,f1,feature,2.0,1.0", "2,0,flow,1.0,3.0"]


def test_peel_parameter_errors():
    g = build_bigraph(np.ones((2, 2)))
    for bad in (0, 1, -0.5, 1.5):
        with pytest.raises(InvalidParameter):
            peel(g, bad)
    with pytest.raises(InvalidParameter):
        peel(g, 0.5, "greedy")
    with pytest.raises(InvalidParameter):
        peel(build_bigraph(np.zeros((0, 0))), 0.5)


def test_peel_deterministic(rng):
    w = rng.random((30, 5)) * (rng.random((30, 5)) > 0.5)
    a = peel(build_bigraph(w), 0.2, BEST_SCORE)
    b = peel(build_bigraph(w), 0.2, BEST_SCORE)
    assert a[2] == b[2] and a[0].flows == b[0].flows


@given(small_graphs())
def test_best_score_matches_exhaustive_search(w):
    sub, _, trace = peel(build_bigraph(w), 0.05, BEST_SCORE)
    assert sub.score == exhaustive_best_score(w)
    assert score(sub) == sub.score
    check_trace(build_bigraph(w), trace)


@given(arrays(float, st.tuples(st.integers(1, 15), st.integers(1, 6)),
              elements=st.floats(0, 1, allow_subnormal=False)),
       st.floats(0.01, 0.99), st.sampled_from([THRESHOLD_STOP, BEST_SCORE]))
def test_trace_invariants_hold(w, threshold, mode):
    g = build_bigraph(w)
    sub, flows, trace = peel(g, threshold, mode)
    check_trace(g, trace)
    assert len(g.vertices()) - len(trace) <= max(stop_count(g.num_nodes(), threshold), 1)
    assert all(fid in g.flow_ids for fid in flows)
