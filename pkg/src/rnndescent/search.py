"""Beam search over a frozen graph.

The candidate pool holds at most ``L`` vertices sorted by (distance to query,
id). Each step expands the nearest not-yet-expanded pool entry, pushing its
``K`` nearest out-neighbours (nearest to the expanded vertex, which is the
stored row order) into the pool. Search stops once every pool entry has been
expanded. A vertex's distance is computed at most once per query: a vertex
that was evicted cannot re-enter, since the pool's worst distance only shrinks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Union

import numba
import numpy as np

from . import prng
from ._parallel import run_chunked
from .errors import DataError, ParameterError
from .graph import AdjacencyGraph
from .metric import l2_sq_kernel

DEFAULT_ENTRY_SEED = 7
STREAM_ENTRY = 0xE1

UNLIMITED = -1


@dataclass(frozen=True)
class FixedEntry:
    vertex: int = 0


@dataclass(frozen=True)
class RandomEntry:
    """``count`` distinct seeded-random entry vertices; ``None`` means ``min(L, n)``.

    The same entry set is used for every query of a search call.
    """

    count: Optional[int] = None
    seed: int = DEFAULT_ENTRY_SEED


EntryPolicy = Union[FixedEntry, RandomEntry]


@dataclass(frozen=True)
class SearchParams:
    L: int = 64
    K: Optional[int] = None
    k: int = 1
    entry: EntryPolicy = RandomEntry()

    def __post_init__(self):
        if self.L < 1:
            raise ParameterError("L", f"must be >= 1, got {self.L}")
        if self.K is not None and self.K < 1:
            raise ParameterError("K", f"must be >= 1 or None, got {self.K}")
        if self.k < 1:
            raise ParameterError("k", f"must be >= 1, got {self.k}")
        if self.k > self.L:
            raise ParameterError("k", f"must be <= L={self.L}, got {self.k}")


@dataclass
class SearchResult:
    ids: np.ndarray
    distances: np.ndarray
    visited: int
    distance_computations: int


@dataclass
class BatchResult:
    ids: np.ndarray  # (queries, k), -1 where fewer than k vertices were found
    distances: np.ndarray
    visited: np.ndarray
    distance_computations: np.ndarray
    seconds: float

    @property
    def qps(self) -> float:
        return len(self.ids) / self.seconds if self.seconds > 0 else float("inf")

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i) -> SearchResult:
        found = self.ids[i] >= 0
        return SearchResult(
            self.ids[i][found], self.distances[i][found], int(self.visited[i]), int(self.distance_computations[i])
        )


@numba.njit(nogil=True, cache=True)
def _pool_insert(pool_id, pool_d, pool_exp, size, L, v, dv):
    """Insert keeping (distance, id) order; returns (new size, position or -1)."""
    if size == L:
        last = size - 1
        if dv > pool_d[last] or (dv == pool_d[last] and v > pool_id[last]):
            return size, -1
        size -= 1
    p = size
    while p > 0 and (pool_d[p - 1] > dv or (pool_d[p - 1] == dv and pool_id[p - 1] > v)):
        pool_id[p] = pool_id[p - 1]
        pool_d[p] = pool_d[p - 1]
        pool_exp[p] = pool_exp[p - 1]
        p -= 1
    pool_id[p] = v
    pool_d[p] = dv
    pool_exp[p] = False
    return size + 1, p


@numba.njit(nogil=True, cache=True, boundscheck=False)
def _search_one(data, offsets, nbrs, q, L, K, entries, seen, stamp, pool_id, pool_d, pool_exp):
    size = 0
    n_dist = 0
    n_visit = 0
    for e in entries:
        if seen[e] == stamp:
            continue
        seen[e] = stamp
        de = l2_sq_kernel(q, data[e])
        n_dist += 1
        size, _ = _pool_insert(pool_id, pool_d, pool_exp, size, L, e, de)
    cursor = 0
    while True:
        while cursor < size and pool_exp[cursor]:
            cursor += 1
        if cursor >= size:
            break
        u = pool_id[cursor]
        pool_exp[cursor] = True
        n_visit += 1
        lo = offsets[u]
        hi = offsets[u + 1]
        if K >= 0 and hi - lo > K:
            hi = lo + K
        best = size
        for j in range(lo, hi):
            v = nbrs[j]
            if seen[v] == stamp:
                continue
            seen[v] = stamp
            dv = l2_sq_kernel(q, data[v])
            n_dist += 1
            size, p = _pool_insert(pool_id, pool_d, pool_exp, size, L, v, dv)
            if p >= 0 and p < best:
                best = p
        if best < cursor:
            cursor = best
    return size, n_visit, n_dist


@numba.njit(nogil=True, cache=True, boundscheck=False)
def _search_range(data, offsets, nbrs, queries, L, K, k, entries, lo, hi, out_ids, out_d, out_visit, out_dist):
    n = data.shape[0]
    seen = np.zeros(n, dtype=np.int32)
    pool_id = np.empty(L, dtype=np.int32)
    pool_d = np.empty(L, dtype=np.float32)
    pool_exp = np.empty(L, dtype=np.bool_)
    for qi in range(lo, hi):
        stamp = qi - lo + 1
        size, n_visit, n_dist = _search_one(
            data, offsets, nbrs, queries[qi], L, K, entries, seen, stamp, pool_id, pool_d, pool_exp
        )
        for j in range(k):
            if j < size:
                out_ids[qi, j] = pool_id[j]
                out_d[qi, j] = pool_d[j]
            else:
                out_ids[qi, j] = -1
                out_d[qi, j] = np.inf
        out_visit[qi] = n_visit
        out_dist[qi] = n_dist


def entry_vertices(policy: EntryPolicy, n: int, L: int) -> np.ndarray:
    if isinstance(policy, FixedEntry):
        if not 0 <= policy.vertex < n:
            raise ParameterError("entry", f"vertex {policy.vertex} out of range [0, {n})")
        return np.array([policy.vertex], dtype=np.int64)
    count = min(L, n) if policy.count is None else policy.count
    if not 1 <= count <= n:
        raise ParameterError("entry", f"count must be in [1, {n}], got {count}")
    return prng.sample_ids(n, count, policy.seed, STREAM_ENTRY)


class SearchIndex:
    """A graph frozen into CSR form next to its vector store, ready for queries.

    Rows must be nearest-first for the ``K`` cap to pick the right
    neighbours; graphs that are not (or lack cached distances) are copied and
    sorted here, leaving the caller's graph untouched.
    """

    def __init__(self, graph: AdjacencyGraph, store):
        if graph.n != store.n:
            raise DataError(f"graph has {graph.n} vertices but store has {store.n} vectors")
        if not (graph.has_distances and graph._rows_sorted):
            graph = graph.copy()
            graph.attach_distances(store)
        self.graph = graph
        self.store = store
        self.offsets, self.neighbors = graph.csr()

    def _queries(self, queries) -> np.ndarray:
        data = queries.data if hasattr(queries, "data") else np.asarray(queries, dtype=np.float32)
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim == 1:
            data = data[None, :]
        if data.shape[1] != self.store.d:
            raise DataError(f"dimension mismatch: query d={data.shape[1]}, store d={self.store.d}")
        return data

    def batch_search(self, queries, params: SearchParams, threads: int = 1) -> BatchResult:
        q = self._queries(queries)
        nq = q.shape[0]
        entries = entry_vertices(params.entry, self.store.n, params.L)
        K = UNLIMITED if params.K is None else params.K
        ids = np.empty((nq, params.k), dtype=np.int32)
        dist = np.empty((nq, params.k), dtype=np.float32)
        visit = np.empty(nq, dtype=np.int64)
        ndist = np.empty(nq, dtype=np.int64)
        t0 = time.perf_counter()
        run_chunked(
            lambda lo, hi: _search_range(
                self.store.data, self.offsets, self.neighbors, q, params.L, K, params.k,
                entries, lo, hi, ids, dist, visit, ndist,
            ),
            nq,
            threads,
        )
        return BatchResult(ids, dist, visit, ndist, time.perf_counter() - t0)

    def search(self, q, params: SearchParams) -> SearchResult:
        q = np.asarray(q, dtype=np.float32)
        if q.ndim != 1:
            raise DataError("search expects a single 1-D query vector")
        return self.batch_search(q, params)[0]


def search(graph: AdjacencyGraph, store, q, params: Optional[SearchParams] = None) -> SearchResult:
    """Approximate top-``k`` neighbours of a single query ``q``."""
    return SearchIndex(graph, store).search(q, params or SearchParams())


def batch_search(graph: AdjacencyGraph, store, queries, params: Optional[SearchParams] = None, threads: int = 1) -> BatchResult:
    """Search every query; ``seconds`` on the result covers the whole batch."""
    return SearchIndex(graph, store).batch_search(queries, params or SearchParams(), threads)
