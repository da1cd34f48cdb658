"""NN-Descent baseline: an approximate K-NN graph by local joins.

Each vertex keeps a candidate pool of up to ``pool_size`` entries sorted by
(distance, id); its first ``K`` entries are its current neighbours. One
iteration joins, for every vertex ``u``, each pair drawn from its
neighbours and reverse neighbours in which at least one side is NEW, proposing
both directions of the pair to the pools. At most ``S`` NEW neighbours per
vertex take part in an iteration (the nearest ones); they become OLD afterwards
and the rest wait their turn. Reverse lists are capped at ``S`` as well.

Joins are computed block by block: the pair distances of a block of vertices
are evaluated (in parallel when ``threads > 1``) from a snapshot of the pools,
then applied in vertex order, so the result does not depend on ``threads``.
"""

from __future__ import annotations

import logging
import time

import numba
import numpy as np

from ._parallel import run_chunked
from .errors import ParameterError
from .graph import NEW, OLD, AdjacencyGraph, random_init
from .metric import l2_sq_kernel

log = logging.getLogger(__name__)

DEFAULT_K = 64
DEFAULT_S = 10
DEFAULT_ITERS = 10
BLOCK = 1024


def join_candidates(g: AdjacencyGraph) -> list[tuple[int, int]]:
    """Edges proposed by one local join over ``g``, as ordered ``(src, dst)`` pairs.

    For every vertex, every pair of its out-neighbours where at least one
    entry is NEW is proposed in both directions. Entries are marked OLD
    afterwards, as the join would.
    """
    proposed = []
    for u in range(g.n):
        nbrs = g.neighbors(u)
        flags = g.neighbor_flags(u)
        for i in range(len(nbrs)):
            for j in range(i + 1, len(nbrs)):
                if flags[i] == NEW or flags[j] == NEW:
                    a, b = sorted((int(nbrs[i]), int(nbrs[j])))
                    proposed.append((a, b))
                    proposed.append((b, a))
        flags[:] = OLD
    return proposed


@numba.njit(nogil=True, cache=True)
def _pool_insert(ids, dists, flags, size, P, v, dv):
    """Insert into one sorted pool row; returns the new size, or -1 if not inserted."""
    if size == P and (dv > dists[P - 1] or (dv == dists[P - 1] and v >= ids[P - 1])):
        return -1
    lo = 0
    hi = size
    while lo < hi:
        mid = (lo + hi) // 2
        if dists[mid] < dv or (dists[mid] == dv and ids[mid] < v):
            lo = mid + 1
        else:
            hi = mid
    # a stored copy of v has exactly this distance, so it would sit at lo
    if lo < size and ids[lo] == v:
        return -1
    end = size if size < P else P - 1
    for p in range(end, lo, -1):
        ids[p] = ids[p - 1]
        dists[p] = dists[p - 1]
        flags[p] = flags[p - 1]
    ids[lo] = v
    dists[lo] = dv
    flags[lo] = 1
    return size + 1 if size < P else size


@numba.njit(nogil=True, cache=True)
def _select(ids, flags, size, K, S, new_l, new_c, old_l, old_c, rnew_l, rnew_c, rold_l, rold_c):
    """Pick each vertex's join lists and their reverse counterparts.

    Forward: up to ``S`` nearest NEW entries of the top ``K`` (marked OLD
    here) and every OLD entry. Reverse lists are capped at ``S``, filled in
    vertex order.
    """
    n = ids.shape[0]
    new_c[:] = 0
    old_c[:] = 0
    rnew_c[:] = 0
    rold_c[:] = 0
    for u in range(n):
        for j in range(min(K, size[u])):
            v = ids[u, j]
            if flags[u, j] == 1:
                if new_c[u] < S:
                    new_l[u, new_c[u]] = v
                    new_c[u] += 1
                    flags[u, j] = 0
            else:
                old_l[u, old_c[u]] = v
                old_c[u] += 1
    for u in range(n):
        for j in range(new_c[u]):
            v = new_l[u, j]
            if rnew_c[v] < S:
                rnew_l[v, rnew_c[v]] = u
                rnew_c[v] += 1
        for j in range(old_c[u]):
            v = old_l[u, j]
            if rold_c[v] < S:
                rold_l[v, rold_c[v]] = u
                rold_c[v] += 1


@numba.njit(nogil=True, cache=True)
def _merge(a, na, b, nb, out, exclude, ne):
    """Distinct values of ``a[:na]`` then ``b[:nb]``, skipping ``exclude[:ne]``."""
    c = 0
    for src, m in ((a, na), (b, nb)):
        for i in range(m):
            v = src[i]
            dup = False
            for j in range(c):
                if out[j] == v:
                    dup = True
                    break
            if not dup:
                for j in range(ne):
                    if exclude[j] == v:
                        dup = True
                        break
            if not dup:
                out[c] = v
                c += 1
    return c


@numba.njit(nogil=True, cache=True, boundscheck=False)
def _join_range(data, new_l, new_c, old_l, old_c, rnew_l, rnew_c, rold_l, rold_c,
                lo, hi, block_lo, slot, out_a, out_b, out_d, out_cnt):
    S = new_l.shape[1]
    K = old_l.shape[1]
    nw = np.empty(2 * S, dtype=np.int32)
    od = np.empty(K + S, dtype=np.int32)
    for u in range(lo, hi):
        n_new = _merge(new_l[u], new_c[u], rnew_l[u], rnew_c[u], nw, od, 0)
        n_old = _merge(old_l[u], old_c[u], rold_l[u], rold_c[u], od, nw, n_new)
        base = (u - block_lo) * slot
        c = 0
        for i in range(n_new):
            a = nw[i]
            for j in range(i + 1, n_new):
                b = nw[j]
                out_a[base + c] = a
                out_b[base + c] = b
                out_d[base + c] = l2_sq_kernel(data[a], data[b])
                c += 1
            for j in range(n_old):
                b = od[j]
                out_a[base + c] = a
                out_b[base + c] = b
                out_d[base + c] = l2_sq_kernel(data[a], data[b])
                c += 1
        out_cnt[u - block_lo] = c


@numba.njit(nogil=True, cache=True)
def _apply_block(ids, dists, flags, size, P, n_block, slot, out_a, out_b, out_d, out_cnt):
    updates = 0
    for r in range(n_block):
        base = r * slot
        for c in range(base, base + out_cnt[r]):
            a = out_a[c]
            b = out_b[c]
            dv = out_d[c]
            s = _pool_insert(ids[a], dists[a], flags[a], size[a], P, b, dv)
            if s >= 0:
                size[a] = s
                updates += 1
            s = _pool_insert(ids[b], dists[b], flags[b], size[b], P, a, dv)
            if s >= 0:
                size[b] = s
                updates += 1
    return updates


def build_nndescent(
    store,
    K: int = DEFAULT_K,
    S: int = DEFAULT_S,
    iters: int = DEFAULT_ITERS,
    seed: int = 2023,
    threads: int = 1,
    pool_size: int | None = None,
) -> AdjacencyGraph:
    """Approximate ``K``-NN graph; ``pool_size`` defaults to ``2 * K``."""
    n = store.n
    if n < 2:
        raise ParameterError("n", f"need at least 2 vectors, got {n}")
    if not 1 <= K <= n - 1:
        raise ParameterError("K", f"must be in [1, {n - 1}], got {K}")
    if S < 1:
        raise ParameterError("S", f"must be >= 1, got {S}")
    if iters < 1:
        raise ParameterError("iters", f"must be >= 1, got {iters}")
    P = 2 * K if pool_size is None else pool_size
    if P < K:
        raise ParameterError("pool_size", f"must be >= K={K}, got {P}")

    t0 = time.perf_counter()
    init = random_init(store, K, seed, threads=threads)
    init.sort_rows()
    ids = np.full((n, P), -1, dtype=np.int32)
    dists = np.full((n, P), np.inf, dtype=np.float32)
    flags = np.zeros((n, P), dtype=np.uint8)
    ids[:, :K] = init.ids.reshape(n, K)
    dists[:, :K] = init.dists.reshape(n, K)
    flags[:, :K] = init.flags.reshape(n, K)
    size = np.full(n, K, dtype=np.int32)

    new_l = np.empty((n, S), dtype=np.int32)
    rnew_l = np.empty((n, S), dtype=np.int32)
    old_l = np.empty((n, K), dtype=np.int32)
    rold_l = np.empty((n, S), dtype=np.int32)
    new_c, old_c, rnew_c, rold_c = (np.zeros(n, dtype=np.int32) for _ in range(4))
    slot = (2 * S) * (2 * S - 1) // 2 + 2 * S * (K + S)
    out_a = np.empty(BLOCK * slot, dtype=np.int32)
    out_b = np.empty(BLOCK * slot, dtype=np.int32)
    out_d = np.empty(BLOCK * slot, dtype=np.float32)
    out_cnt = np.empty(BLOCK, dtype=np.int64)
    for it in range(iters):
        updates = 0
        _select(ids, flags, size, K, S, new_l, new_c, old_l, old_c, rnew_l, rnew_c, rold_l, rold_c)
        for block_lo in range(0, n, BLOCK):
            block_hi = min(n, block_lo + BLOCK)
            run_chunked(
                lambda lo, hi: _join_range(
                    store.data, new_l, new_c, old_l, old_c, rnew_l, rnew_c, rold_l, rold_c,
                    block_lo + lo, block_lo + hi, block_lo, slot, out_a, out_b, out_d, out_cnt,
                ),
                block_hi - block_lo,
                threads,
            )
            updates += _apply_block(ids, dists, flags, size, P, block_hi - block_lo, slot, out_a, out_b, out_d, out_cnt)
        log.info("nndescent iter %d: %d pool updates, %.2fs", it + 1, updates, time.perf_counter() - t0)

    src = np.repeat(np.arange(n, dtype=np.int64), K)
    g = AdjacencyGraph.from_edges(
        n, src, ids[:, :K].reshape(-1), dists[:, :K].reshape(-1), np.full(n * K, OLD, dtype=np.uint8)
    )
    g._rows_sorted = True
    return g
