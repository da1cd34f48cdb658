import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnndescent.builder import BuildParams, build
from rnndescent.dataset import VectorStore, brute_force_gt, synth_uniform
from rnndescent.errors import DataError, ParameterError
from rnndescent.graph import AdjacencyGraph, random_init
from rnndescent.metric import l2_sq
from rnndescent.search import (
    FixedEntry,
    RandomEntry,
    SearchIndex,
    SearchParams,
    batch_search,
    entry_vertices,
    search,
)


def reference_search(graph, store, q, L, K, entries):
    """Sorted-list beam search with a seen set; returns (ids, visited, dist count)."""
    seen = set()
    pool = []  # [dist, id, expanded]
    n_dist = 0

    def push(v):
        nonlocal n_dist
        if v in seen:
            return
        seen.add(v)
        n_dist += 1
        pool.append([l2_sq(q, store[v]), v, False])
        pool.sort(key=lambda e: (e[0], e[1]))
        del pool[L:]

    for e in entries:
        push(int(e))
    visited = 0
    while True:
        nxt = next((e for e in pool if not e[2]), None)
        if nxt is None:
            break
        nxt[2] = True
        visited += 1
        row = graph.neighbors(nxt[1]).tolist()
        for v in row if K is None else row[:K]:
            push(v)
    return [e[1] for e in pool], visited, n_dist


@given(
    st.integers(2, 80), st.integers(1, 6), st.integers(0, 10**6),
    st.integers(1, 20), st.one_of(st.none(), st.integers(1, 10)),
)
@settings(max_examples=60, deadline=None)
def test_matches_reference(n, d, seed, L, K):
    store = synth_uniform(n, d, seed)
    g = random_init(store, min(4, n - 1), seed)
    g.sort_rows()
    queries = synth_uniform(5, d, seed + 1)
    params = SearchParams(L=L, K=K, k=1, entry=RandomEntry(count=min(3, n), seed=seed))
    res = batch_search(g, store, queries, params)
    entries = entry_vertices(params.entry, n, L)
    for i in range(queries.n):
        ids, visited, n_dist = reference_search(g, store, queries[i], L, K, entries)
        assert res.ids[i, 0] == ids[0]
        assert res.visited[i] == visited
        assert res.distance_computations[i] == n_dist


def test_single_vertex():
    store = VectorStore(np.array([[1.0, 2.0]]))
    g = AdjacencyGraph.from_lists([[]], store)
    r = search(g, store, np.array([0.0, 0.0]), SearchParams(L=4, k=1))
    assert r.ids.tolist() == [0]
    assert r.distances.tolist() == [5.0]


def test_mutual_pair(points_1d):
    store = points_1d(0.0, 10.0)
    g = AdjacencyGraph.from_lists([[1], [0]], store)
    r = search(g, store, np.array([9.0]), SearchParams(L=1, entry=FixedEntry(0)))
    assert r.ids.tolist() == [1]


def test_exhaustive_pool_equals_brute_force():
    store = synth_uniform(300, 6, seed=2)
    g = build(store, BuildParams(S=10, R=32, T1=2, T2=4))
    queries = synth_uniform(30, 6, seed=3)
    res = batch_search(g, store, queries, SearchParams(L=store.n, k=5, entry=FixedEntry(0)))
    gt = brute_force_gt(store, queries, 5)
    assert np.array_equal(res.ids, gt.ids)
    assert np.array_equal(res.distances, gt.distances)


def test_results_sorted_and_distinct(small_store):
    g = build(small_store, BuildParams(S=10, R=32, T1=2, T2=4))
    res = batch_search(g, small_store, synth_uniform(20, 8, seed=4), SearchParams(L=16, k=10))
    for i in range(len(res)):
        assert len(set(res.ids[i].tolist())) == 10
        assert np.all(np.diff(res.distances[i]) >= 0)


def test_batch_of_one_matches_single(small_store):
    g = build(small_store, BuildParams(S=10, R=32, T1=2, T2=4))
    q = synth_uniform(1, 8, seed=6)
    p = SearchParams(L=8, k=3)
    a = batch_search(g, small_store, q, p)
    b = search(g, small_store, q[0], p)
    assert a.ids[0].tolist() == b.ids.tolist()


def test_threads_agree(small_store):
    g = build(small_store, BuildParams(S=10, R=32, T1=2, T2=4))
    queries = synth_uniform(200, 8, seed=9)
    p = SearchParams(L=12, K=8, k=4)
    a = batch_search(g, small_store, queries, p, threads=1)
    b = batch_search(g, small_store, queries, p, threads=8)
    assert np.array_equal(a.ids, b.ids)
    assert np.array_equal(a.distance_computations, b.distance_computations)


def test_qps_is_queries_over_seconds(small_store):
    g = random_init(small_store, 5, seed=1)
    res = batch_search(g, small_store, synth_uniform(50, 8, seed=1), SearchParams(L=4))
    assert res.qps == pytest.approx(50 / res.seconds)


def test_degree_cap_uses_nearest_prefix(points_1d):
    store = points_1d(0.0, 3.0, 1.0, 2.0)
    g = AdjacencyGraph.from_lists([[1, 2, 3], [], [], []], store)
    r = search(g, store, np.array([3.0]), SearchParams(L=4, K=1, k=4, entry=FixedEntry(0)))
    # only the nearest neighbour of 0 (id 2) is expanded
    assert sorted(r.ids.tolist()) == [0, 2]
    r = search(g, store, np.array([3.0]), SearchParams(L=4, K=None, k=4, entry=FixedEntry(0)))
    assert r.ids.tolist() == [1, 3, 2, 0]


def test_short_result_padded(points_1d):
    store = points_1d(0.0, 1.0, 2.0)
    g = AdjacencyGraph.from_lists([[], [], []], store)
    res = batch_search(g, store, np.array([[0.0]]), SearchParams(L=3, k=2, entry=FixedEntry(2)))
    assert res.ids.tolist() == [[2, -1]]
    assert res[0].ids.tolist() == [2]


def test_caller_graph_untouched(points_1d):
    store = points_1d(0.0, 3.0, 1.0)
    g = AdjacencyGraph.from_lists([[1, 2], [], []])
    SearchIndex(g, store)
    assert g.neighbors(0).tolist() == [1, 2]
    assert not g.has_distances


def test_param_errors(small_store):
    with pytest.raises(ParameterError) as e:
        SearchParams(L=4, k=5)
    assert e.value.name == "k"
    with pytest.raises(ParameterError):
        SearchParams(L=0)
    with pytest.raises(ParameterError):
        SearchParams(K=0)
    g = random_init(small_store, 3, seed=1)
    with pytest.raises(ParameterError):
        batch_search(g, small_store, small_store[:2], SearchParams(entry=FixedEntry(small_store.n)))


def test_dimension_mismatch(small_store):
    g = random_init(small_store, 3, seed=1)
    with pytest.raises(DataError):
        batch_search(g, small_store, np.zeros((2, 7), np.float32))
