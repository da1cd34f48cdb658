"""RNN-Descent graph construction.

The build starts from a random ``S``-out graph and alternates two phases:

``update_neighbors``
    For every vertex ``u``, scan its out-list nearest first. A neighbour ``v``
    that is at least as close to an already-kept neighbour ``w`` as it is to
    ``u`` loses the edge ``(u, v)``; the edge ``(w, v)`` is added instead (if
    absent), so ``v`` stays reachable from ``u`` through ``w``. Pairs whose
    entries are both OLD were compared in an earlier pass and are skipped.

``add_reverse_edges``
    Add every reversed edge, then trim each vertex to its ``R`` shortest
    out-edges and to its ``R`` shortest in-edges.

Concurrency: with ``threads == 1`` the passes run strictly in vertex order and
cross inserts land immediately. With more threads, vertices are processed in
parallel chunks; every worker writes only its own rows and records cross
inserts ``(w, v)`` in a per-vertex pending queue, which is applied in vertex
order after the chunk barrier. No lock is ever held, and the result does not
depend on the thread count as long as it is above one, but it differs from the
strictly sequential result because inserts become visible one pass later.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from ._parallel import run_chunked
from .errors import ParameterError
from .graph import NEW, OLD, AdjacencyGraph, grow_push, random_init, row_contains, sort_row
from .metric import l2_sq_kernel

log = logging.getLogger(__name__)

DEFAULT_S = 20
DEFAULT_R = 96
DEFAULT_T1 = 4
DEFAULT_T2 = 15
DEFAULT_SEED = 2023


@dataclass(frozen=True)
class BuildParams:
    S: int = DEFAULT_S
    R: int = DEFAULT_R
    T1: int = DEFAULT_T1
    T2: int = DEFAULT_T2
    seed: int = DEFAULT_SEED
    threads: int = 1

    def __post_init__(self):
        for name in ("S", "R", "T1", "T2", "threads"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(name, f"must be an integer >= 1, got {value}")


@dataclass
class UpdateStats:
    removed: int = 0
    inserted: int = 0
    duplicate: int = 0
    skipped_by_flag: int = 0
    distance_computations: int = 0

    @property
    def edits(self) -> int:
        return self.removed + self.inserted


@dataclass
class BuildLog:
    updates: list[UpdateStats] = field(default_factory=list)
    reverse_phases: int = 0
    seconds: float = 0.0


def rng_strategy(store, u: int, candidates: Sequence[tuple[int, float]]) -> list[tuple[int, float]]:
    """Select the neighbours of ``u`` that no closer selected neighbour shadows.

    ``candidates`` are ``(vertex, distance to u)`` pairs. They are visited in
    ascending (distance, id) order and ``v`` is kept iff
    ``dist(u, v) < dist(v, w)`` for every previously kept ``w``. The kept
    pairs are returned in visiting order.
    """
    data = store.data
    ordered = sorted(((float(d), int(v)) for v, d in candidates))
    kept: list[tuple[int, float]] = []
    for dv, v in ordered:
        if v == u:
            raise ValueError(f"candidate list of {u} contains {u} itself")
        if all(dv < l2_sq_kernel(data[v], data[w]) for w, _ in kept):
            kept.append((v, dv))
    return kept


@numba.njit(nogil=True, cache=True)
def _scan_vertex(data, u, start, deg, ids, dists, flags, rej_w, rej_v, rej_d, counters):
    """Sort and prune row ``u`` in place. Rejections go to ``rej_*[:count]``.

    ``counters``: [skipped_by_flag, distance_computations].
    Returns the number of rejections.
    """
    s = start[u]
    m = deg[u]
    sort_row(ids, dists, flags, s, m)
    kept = 0
    n_rej = 0
    for j in range(s, s + m):
        v = ids[j]
        dv = dists[j]
        fv = flags[j]
        ok = True
        for t in range(s, s + kept):
            fw = flags[t]
            if fv == OLD and fw == OLD:
                counters[0] += 1
                continue
            w = ids[t]
            dvw = l2_sq_kernel(data[v], data[w])
            counters[1] += 1
            if dv >= dvw:
                ok = False
                rej_w[n_rej] = w
                rej_v[n_rej] = v
                rej_d[n_rej] = dvw
                n_rej += 1
                break
        if ok:
            p = s + kept
            ids[p] = v
            dists[p] = dv
            flags[p] = fv
            kept += 1
    for t in range(s, s + kept):
        flags[t] = OLD
    deg[u] = kept
    return n_rej


@numba.njit(nogil=True, cache=True)
def _update_sequential(data, start, cap, deg, ids, dists, flags, used, out):
    """One strictly ordered pass; cross inserts are visible immediately.

    ``out``: [removed, inserted, duplicate, skipped_by_flag, distance_computations].
    """
    n = start.shape[0]
    max_deg = 1
    for u in range(n):
        max_deg = max(max_deg, cap[u])
    rej_w = np.empty(max_deg, dtype=np.int32)
    rej_v = np.empty(max_deg, dtype=np.int32)
    rej_d = np.empty(max_deg, dtype=np.float32)
    counters = np.zeros(2, dtype=np.int64)
    for u in range(n):
        if deg[u] > rej_w.shape[0]:
            rej_w = np.empty(2 * deg[u], dtype=np.int32)
            rej_v = np.empty(2 * deg[u], dtype=np.int32)
            rej_d = np.empty(2 * deg[u], dtype=np.float32)
        n_rej = _scan_vertex(data, u, start, deg, ids, dists, flags, rej_w, rej_v, rej_d, counters)
        out[0] += n_rej
        for r in range(n_rej):
            w = rej_w[r]
            v = rej_v[r]
            if row_contains(start, deg, ids, w, v):
                out[2] += 1
            else:
                ids, dists, flags, used = grow_push(start, cap, deg, ids, dists, flags, used, w, v, rej_d[r], NEW)
                out[1] += 1
    out[3] += counters[0]
    out[4] += counters[1]
    return ids, dists, flags, used


@numba.njit(nogil=True, cache=True)
def _update_range(data, start, deg, ids, dists, flags, lo, hi, pend_w, pend_v, pend_d, pend_cnt, per_vertex):
    """Deferred-insert pass over ``[lo, hi)``; writes only rows and slots it owns.

    Vertex ``u``'s rejections are stored at ``pend_*[start[u]:start[u] + pend_cnt[u]]``,
    which fits because a row never rejects more entries than it holds.
    """
    counters = np.zeros(2, dtype=np.int64)
    for u in range(lo, hi):
        s = start[u]
        m = deg[u]
        counters[:] = 0
        pend_cnt[u] = _scan_vertex(
            data, u, start, deg, ids, dists, flags,
            pend_w[s:s + m], pend_v[s:s + m], pend_d[s:s + m], counters,
        )
        per_vertex[u, 0] = counters[0]
        per_vertex[u, 1] = counters[1]


@numba.njit(nogil=True, cache=True)
def _apply_pending(start, cap, deg, ids, dists, flags, used, pend_start, pend_w, pend_v, pend_d, pend_cnt, out):
    n = start.shape[0]
    for u in range(n):
        s = pend_start[u]
        for r in range(s, s + pend_cnt[u]):
            w = pend_w[r]
            v = pend_v[r]
            out[0] += 1
            if row_contains(start, deg, ids, w, v):
                out[2] += 1
            else:
                ids, dists, flags, used = grow_push(start, cap, deg, ids, dists, flags, used, w, v, pend_d[r], NEW)
                out[1] += 1
    return ids, dists, flags, used


def _maybe_compact(g: AdjacencyGraph) -> None:
    if g.used > 2 * g.n_edges + 8 * g.n:
        g.compact(slack_percent=25, slack_min=4)


def update_neighbors(g: AdjacencyGraph, store, threads: int = 1) -> UpdateStats:
    """One neighbourhood-update pass over every vertex, in place.

    ``removed`` counts dropped ``(u, v)`` edges, ``inserted`` the ``(w, v)``
    edges added in their place and ``duplicate`` the replacements skipped
    because ``(w, v)`` already existed.
    """
    out = np.zeros(5, dtype=np.int64)
    if threads <= 1:
        g.ids, g.dists, g.flags, g.used = _update_sequential(
            store.data, g.start, g.cap, g.deg, g.ids, g.dists, g.flags, g.used, out
        )
    else:
        size = g.ids.shape[0]
        pend_w = np.empty(size, dtype=np.int32)
        pend_v = np.empty(size, dtype=np.int32)
        pend_d = np.empty(size, dtype=np.float32)
        pend_cnt = np.zeros(g.n, dtype=np.int32)
        per_vertex = np.zeros((g.n, 2), dtype=np.int64)
        run_chunked(
            lambda lo, hi: _update_range(
                store.data, g.start, g.deg, g.ids, g.dists, g.flags, lo, hi,
                pend_w, pend_v, pend_d, pend_cnt, per_vertex,
            ),
            g.n,
            threads,
        )
        pend_start = g.start.copy()
        applied = np.zeros(3, dtype=np.int64)
        g.ids, g.dists, g.flags, g.used = _apply_pending(
            g.start, g.cap, g.deg, g.ids, g.dists, g.flags, g.used,
            pend_start, pend_w, pend_v, pend_d, pend_cnt, applied,
        )
        out[0:3] = applied
        out[3:5] = per_vertex.sum(axis=0)
    g._rows_sorted = False
    _maybe_compact(g)
    return UpdateStats(*(int(x) for x in out))


def _keep_shortest(primary: np.ndarray, secondary: np.ndarray, dist: np.ndarray, R: int, n: int) -> np.ndarray:
    """Mask of edges ranked < R within their ``primary`` group by (dist, secondary)."""
    order = np.lexsort((secondary, dist, primary))
    counts = np.bincount(primary, minlength=n)
    first = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=first[1:])
    rank = np.empty(primary.size, dtype=np.int64)
    rank[order] = np.arange(primary.size) - first[primary[order]]
    return rank < R


def add_reverse_edges(g: AdjacencyGraph, R: int, order: str = "out_in") -> None:
    """Add all reversed edges (flagged NEW), then cap out- and in-degree at ``R``.

    Each cap keeps a vertex's ``R`` shortest edges, ties to the lower
    neighbour id. ``order="out_in"`` (default) trims out-degree first, which
    guarantees both caps hold afterwards; ``"in_out"`` is kept for
    sensitivity experiments and only guarantees the out-degree cap.
    Rows come out sorted by (distance, id).
    """
    if R < 1:
        raise ParameterError("R", f"must be >= 1, got {R}")
    if order not in ("out_in", "in_out"):
        raise ValueError(f"order must be 'out_in' or 'in_out', got {order!r}")
    n = g.n
    src, dst, dist, flag = g.edges()
    dst = dst.astype(np.int64)
    all_src = np.concatenate([src, dst])
    all_dst = np.concatenate([dst, src])
    all_dist = np.concatenate([dist, dist])
    all_flag = np.concatenate([flag, np.full(src.size, NEW, dtype=np.uint8)])
    # existing edges come first, so np.unique keeps their flags
    _, first = np.unique(all_src * n + all_dst, return_index=True)
    src, dst, dist, flag = all_src[first], all_dst[first], all_dist[first], all_flag[first]

    steps = ("out", "in") if order == "out_in" else ("in", "out")
    for step in steps:
        if step == "out":
            keep = _keep_shortest(src, dst, dist, R, n)
        else:
            keep = _keep_shortest(dst, src, dist, R, n)
        src, dst, dist, flag = src[keep], dst[keep], dist[keep], flag[keep]

    row_order = np.lexsort((dst, dist, src))
    rebuilt = AdjacencyGraph.from_edges(
        n, src[row_order], dst[row_order].astype(np.int32), dist[row_order], flag[row_order], slack=4
    )
    rebuilt._rows_sorted = True
    g.replace(rebuilt)


def build(store, params: Optional[BuildParams] = None, log_out: Optional[BuildLog] = None) -> AdjacencyGraph:
    """Construct an RNN-Descent graph over ``store``.

    Runs ``T1`` outer rounds of ``T2`` update passes, adding reverse edges
    between rounds (never after the last one). The returned graph has rows
    sorted nearest-first and no out-degree cap; cap at search time instead.
    """
    params = params or BuildParams()
    if store.n < 2:
        raise ParameterError("n", f"need at least 2 vectors, got {store.n}")
    if params.S > store.n - 1:
        raise ParameterError("S", f"must be <= n - 1 = {store.n - 1}, got {params.S}")
    t0 = time.perf_counter()
    g = random_init(store, params.S, params.seed, threads=params.threads)
    blog = log_out if log_out is not None else BuildLog()
    for t1 in range(1, params.T1 + 1):
        for t2 in range(1, params.T2 + 1):
            stats = update_neighbors(g, store, threads=params.threads)
            blog.updates.append(stats)
            log.debug(
                "round %d pass %d: removed=%d inserted=%d dup=%d dist=%d",
                t1, t2, stats.removed, stats.inserted, stats.duplicate, stats.distance_computations,
            )
        if t1 != params.T1:
            add_reverse_edges(g, params.R)
            blog.reverse_phases += 1
        log.info("round %d/%d done, %d edges, %.2fs", t1, params.T1, g.n_edges, time.perf_counter() - t0)
    g.sort_rows()
    g.compact()
    blog.seconds = time.perf_counter() - t0
    return g

