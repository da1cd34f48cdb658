"""Directed adjacency with cached edge distances and new/old flags.

Each vertex owns a growable out-list living in a shared pool::

    pool[start[u] : start[u] + degree[u]]     (capacity[u] slots reserved)

Three parallel pool arrays hold the neighbour id (int32), the cached squared
distance to the owner (float32) and the flag (``NEW``/``OLD``, uint8). When a
row overflows it is moved to the end of the pool with doubled capacity; the
pool itself doubles when it runs out. :meth:`AdjacencyGraph.compact` squeezes
out the holes left behind.

Only out-edges are stored. In-degree statistics and the reverse-edge phase
derive a transient reverse view from :meth:`AdjacencyGraph.edges`.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from . import prng
from .errors import DataError, ParameterError
from .metric import l2_sq_kernel

OLD = np.uint8(0)
NEW = np.uint8(1)

STREAM_INIT = 0x1A17

MAGIC = b"RNND"
FORMAT_VERSION = 1


@numba.njit(nogil=True, cache=True)
def grow_push(start, cap, deg, ids, dists, flags, used, w, v, dv, fv):
    """Append ``(v, dv, fv)`` to row ``w``, relocating the row or the pool if full.

    Returns the (possibly reallocated) pool arrays and the new high-water mark.
    """
    if deg[w] == cap[w]:
        new_cap = max(8, 2 * cap[w])
        if used + new_cap > ids.shape[0]:
            size = max(2 * ids.shape[0], used + new_cap)
            ids2 = np.empty(size, dtype=ids.dtype)
            dists2 = np.empty(size, dtype=dists.dtype)
            flags2 = np.empty(size, dtype=flags.dtype)
            ids2[:used] = ids[:used]
            dists2[:used] = dists[:used]
            flags2[:used] = flags[:used]
            ids, dists, flags = ids2, dists2, flags2
        s = start[w]
        m = deg[w]
        for j in range(m):
            ids[used + j] = ids[s + j]
            dists[used + j] = dists[s + j]
            flags[used + j] = flags[s + j]
        start[w] = used
        cap[w] = new_cap
        used += new_cap
    p = start[w] + deg[w]
    ids[p] = v
    dists[p] = dv
    flags[p] = fv
    deg[w] += 1
    return ids, dists, flags, used


@numba.njit(nogil=True, cache=True)
def row_contains(start, deg, ids, w, v):
    s = start[w]
    for j in range(s, s + deg[w]):
        if ids[j] == v:
            return True
    return False


@numba.njit(nogil=True, cache=True)
def sort_row(ids, dists, flags, s, m):
    """Insertion sort of one row by (distance, id); rows are usually near-sorted."""
    for j in range(s + 1, s + m):
        v = ids[j]
        dv = dists[j]
        fv = flags[j]
        p = j
        while p > s and (dists[p - 1] > dv or (dists[p - 1] == dv and ids[p - 1] > v)):
            ids[p] = ids[p - 1]
            dists[p] = dists[p - 1]
            flags[p] = flags[p - 1]
            p -= 1
        ids[p] = v
        dists[p] = dv
        flags[p] = fv


@numba.njit(nogil=True, cache=True)
def _sort_rows(start, deg, ids, dists, flags, lo, hi):
    for u in range(lo, hi):
        sort_row(ids, dists, flags, start[u], deg[u])


@numba.njit(nogil=True, cache=True)
def _compact(start, cap, deg, ids, dists, flags, slack_num, slack_min):
    n = start.shape[0]
    new_start = np.empty(n, dtype=np.int64)
    new_cap = np.empty(n, dtype=np.int32)
    total = 0
    for u in range(n):
        c = deg[u] + max(slack_min, (deg[u] * slack_num) // 100)
        new_start[u] = total
        new_cap[u] = c
        total += c
    ids2 = np.empty(max(total, 1), dtype=np.int32)
    dists2 = np.empty(max(total, 1), dtype=np.float32)
    flags2 = np.empty(max(total, 1), dtype=np.uint8)
    for u in range(n):
        s = start[u]
        t = new_start[u]
        for j in range(deg[u]):
            ids2[t + j] = ids[s + j]
            dists2[t + j] = dists[s + j]
            flags2[t + j] = flags[s + j]
    return new_start, new_cap, ids2, dists2, flags2, total


@numba.njit(nogil=True, cache=True)
def _fill_distances(data, start, deg, ids, dists):
    for u in range(start.shape[0]):
        s = start[u]
        for j in range(s, s + deg[u]):
            dists[j] = l2_sq_kernel(data[u], data[ids[j]])


class AdjacencyGraph:
    """Per-vertex out-lists of ``(id, distance, flag)`` entries.

    The same structure serves as the mutable graph under construction and as
    the frozen search index. Rows are unsorted in general; :meth:`sort_rows`
    orders each by (distance, id), which search relies on for its degree cap.
    """

    def __init__(self, n, start, cap, deg, ids, dists, flags, used, has_distances=True):
        self.n = int(n)
        self.start = start
        self.cap = cap
        self.deg = deg
        self.ids = ids
        self.dists = dists
        self.flags = flags
        self.used = int(used)
        self.has_distances = has_distances
        self._rows_sorted = False

    @classmethod
    def from_edges(cls, n, src, dst, dist=None, flag=None, slack=0):
        """Build rows from flat edge arrays, keeping the given per-row order."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int32)
        has_distances = dist is not None
        if dist is None:
            dist = np.full(src.shape[0], np.nan, dtype=np.float32)
        if flag is None:
            flag = np.full(src.shape[0], NEW, dtype=np.uint8)
        order = np.argsort(src, kind="stable")
        deg = np.bincount(src, minlength=n).astype(np.int32)
        cap = deg + np.int32(slack)
        start = np.zeros(n, dtype=np.int64)
        np.cumsum(cap[:-1], out=start[1:])
        used = int(cap.sum())
        size = max(used, 1)
        ids = np.empty(size, dtype=np.int32)
        dists = np.empty(size, dtype=np.float32)
        flags = np.empty(size, dtype=np.uint8)
        # position of each sorted edge inside its row
        src_sorted = src[order]
        row_first = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=row_first[1:])
        rank = np.arange(src.shape[0], dtype=np.int64) - row_first[src_sorted]
        pos = start[src_sorted] + rank
        ids[pos] = dst[order]
        dists[pos] = np.asarray(dist, dtype=np.float32)[order]
        flags[pos] = np.asarray(flag, dtype=np.uint8)[order]
        return cls(n, start, cap, deg, ids, dists, flags, used, has_distances)

    @classmethod
    def from_lists(cls, lists, store=None):
        """Build from a list of neighbour-id sequences; distances from ``store`` if given."""
        n = len(lists)
        src = np.concatenate([np.full(len(l), u, dtype=np.int64) for u, l in enumerate(lists)] or [np.empty(0, np.int64)])
        dst = np.concatenate([np.asarray(l, dtype=np.int32).reshape(-1) for l in lists] or [np.empty(0, np.int32)])
        g = cls.from_edges(n, src, dst)
        g.validate()
        if store is not None:
            g.attach_distances(store, sort=False)
        return g

    @classmethod
    def from_csr(cls, offsets, neighbors):
        n = offsets.shape[0] - 1
        deg = np.diff(offsets).astype(np.int32)
        start = offsets[:-1].astype(np.int64).copy()
        m = int(offsets[-1])
        size = max(m, 1)
        ids = np.empty(size, dtype=np.int32)
        ids[:m] = neighbors
        dists = np.full(size, np.nan, dtype=np.float32)
        flags = np.full(size, OLD, dtype=np.uint8)
        return cls(n, start, deg.copy(), deg, ids, dists, flags, m, has_distances=False)

    def copy(self) -> "AdjacencyGraph":
        g = AdjacencyGraph(
            self.n, self.start.copy(), self.cap.copy(), self.deg.copy(), self.ids.copy(),
            self.dists.copy(), self.flags.copy(), self.used, self.has_distances,
        )
        g._rows_sorted = self._rows_sorted
        return g

    def _row(self, u):
        s = self.start[u]
        return slice(s, s + self.deg[u])

    def neighbors(self, u: int) -> np.ndarray:
        return self.ids[self._row(u)]

    def neighbor_distances(self, u: int) -> np.ndarray:
        return self.dists[self._row(u)]

    def neighbor_flags(self, u: int) -> np.ndarray:
        return self.flags[self._row(u)]

    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(u).tolist() for u in range(self.n)]

    def out_degrees(self) -> np.ndarray:
        return self.deg.copy()

    @property
    def n_edges(self) -> int:
        return int(self.deg.sum())

    def has_edge(self, u: int, v: int) -> bool:
        return bool(row_contains(self.start, self.deg, self.ids, u, v))

    def edges(self):
        """Flat ``(src, dst, dist, flag)`` arrays in row order."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.deg)
        if self.n == 0 or src.size == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty.astype(np.int32), empty.astype(np.float32), empty.astype(np.uint8)
        row_first = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.deg, out=row_first[1:])
        pos = self.start[src] + (np.arange(src.size) - row_first[src])
        return src, self.ids[pos], self.dists[pos], self.flags[pos]

    def replace(self, other: "AdjacencyGraph") -> None:
        """Adopt ``other``'s storage in place (keeps references to ``self`` valid)."""
        self.__dict__.update(other.__dict__)

    def compact(self, slack_percent: int = 0, slack_min: int = 0) -> None:
        start, cap, ids, dists, flags, used = _compact(
            self.start, self.cap, self.deg, self.ids, self.dists, self.flags, slack_percent, slack_min
        )
        self.start, self.cap, self.ids, self.dists, self.flags, self.used = start, cap, ids, dists, flags, used

    def sort_rows(self) -> None:
        _sort_rows(self.start, self.deg, self.ids, self.dists, self.flags, 0, self.n)
        self._rows_sorted = True

    def attach_distances(self, store, sort: bool = True) -> None:
        """(Re)compute every cached distance from ``store``; optionally sort rows."""
        if store.n != self.n:
            raise DataError(f"graph has {self.n} vertices but store has {store.n} vectors")
        _fill_distances(store.data, self.start, self.deg, self.ids, self.dists)
        self.has_distances = True
        if sort:
            self.sort_rows()

    def csr(self):
        """``(offsets, neighbors)`` with rows in their current order."""
        offsets = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.deg, out=offsets[1:])
        return offsets, self.edges()[1].astype(np.int32)

    def validate(self) -> None:
        """Raise :class:`DataError` on out-of-range ids, self-loops or duplicate edges."""
        src, dst, _, _ = self.edges()
        if dst.size == 0:
            return
        if dst.min() < 0 or dst.max() >= self.n:
            raise DataError(f"neighbour id out of range [0, {self.n})")
        if (src == dst).any():
            raise DataError(f"self-loop at vertex {int(src[src == dst][0])}")
        key = src * self.n + dst
        if np.unique(key).size != key.size:
            raise DataError("duplicate edge")

    def same_adjacency(self, other: "AdjacencyGraph") -> bool:
        if self.n != other.n or not np.array_equal(self.deg, other.deg):
            return False
        return np.array_equal(self.csr()[1], other.csr()[1])

    def __repr__(self) -> str:
        return f"AdjacencyGraph(n={self.n}, edges={self.n_edges})"


@numba.njit(nogil=True, cache=True)
def _random_rows(data, n, S, key_seed, lo, hi, ids, dists, flags):
    scratch = np.empty(S, dtype=np.int64)
    for u in range(lo, hi):
        key = prng.stream_key(key_seed, np.uint64(STREAM_INIT) + np.uint64(u))
        prng.sample_without_replacement(key, n - 1, S, scratch)
        base = u * S
        for j in range(S):
            v = scratch[j]
            if v >= u:
                v += 1
            ids[base + j] = v
            dists[base + j] = l2_sq_kernel(data[u], data[v])
            flags[base + j] = 1


def random_init(store, S: int, seed: int, threads: int = 1) -> AdjacencyGraph:
    """Each vertex gets ``S`` distinct random out-neighbours (never itself), all NEW.

    Vertex ``u`` draws from its own counter-based stream, so the result does
    not depend on ``threads``.
    """
    from ._parallel import run_chunked

    n = store.n
    if n < 2:
        raise ParameterError("n", f"need at least 2 vectors, got {n}")
    if not 1 <= S <= n - 1:
        raise ParameterError("S", f"must be in [1, {n - 1}], got {S}")
    size = n * S
    ids = np.empty(size, dtype=np.int32)
    dists = np.empty(size, dtype=np.float32)
    flags = np.empty(size, dtype=np.uint8)
    key_seed = prng.seed_to_u64(seed)
    run_chunked(
        lambda lo, hi: _random_rows(store.data, n, S, key_seed, lo, hi, ids, dists, flags),
        n,
        threads,
    )
    start = np.arange(n, dtype=np.int64) * S
    deg = np.full(n, S, dtype=np.int32)
    return AdjacencyGraph(n, start, deg.copy(), deg, ids, dists, flags, size)


def capped_edges(g: AdjacencyGraph, K: Optional[int]):
    """Edges that survive truncating every out-list to its ``K`` nearest.

    Nearness is (cached distance, id) when distances are attached, else the
    stored row order (rows are written nearest-first).
    """
    src, dst, dist, _ = g.edges()
    if K is None:
        return src, dst
    if g.has_distances:
        order = np.lexsort((dst, dist, src))
    else:
        order = np.arange(src.size)
    src_o, dst_o = src[order], dst[order]
    row_first = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(g.deg, out=row_first[1:])
    rank = np.arange(src_o.size) - row_first[src_o]
    keep = rank < K
    return src_o[keep], dst_o[keep]


@dataclass
class DegreeStats:
    """Degree histograms: ``out_hist[k]`` is the number of vertices with out-degree ``k``."""

    in_hist: np.ndarray
    out_hist: np.ndarray
    aod: float
    max_in: int
    max_out: int
    n_edges: int
    cap: Optional[int] = None

    def summary(self) -> str:
        cap = "inf" if self.cap is None else str(self.cap)
        return (
            f"K={cap} edges={self.n_edges} AOD={self.aod:.2f} "
            f"max_out={self.max_out} max_in={self.max_in}"
        )


def degree_stats(g: AdjacencyGraph, K: Optional[int] = None) -> DegreeStats:
    if K is not None and K < 1:
        raise ParameterError("K", f"must be >= 1, got {K}")
    src, dst = capped_edges(g, K)
    out_deg = np.bincount(src, minlength=g.n)
    in_deg = np.bincount(dst, minlength=g.n)
    return DegreeStats(
        in_hist=np.bincount(in_deg),
        out_hist=np.bincount(out_deg),
        aod=float(out_deg.mean()) if g.n else 0.0,
        max_in=int(in_deg.max()) if g.n else 0,
        max_out=int(out_deg.max()) if g.n else 0,
        n_edges=int(src.size),
        cap=K,
    )


_HEADER = struct.Struct("<4sIQ")


def serialize(g: AdjacencyGraph, path) -> None:
    """Write ``g`` as: magic, version u32, n u64, (n+1) u64 offsets, u32 ids, CRC32.

    All integers little-endian. The CRC32 covers every preceding byte.
    Flags and distances are not stored.
    """
    offsets, neighbors = g.csr()
    payload = b"".join(
        (
            _HEADER.pack(MAGIC, FORMAT_VERSION, g.n),
            offsets.astype("<u8").tobytes(),
            neighbors.astype("<u4").tobytes(),
        )
    )
    with open(path, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))


def deserialize(path, store=None) -> AdjacencyGraph:
    """Read an index file; attaching ``store`` recomputes cached distances."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise DataError(f"{path}: bad magic, not an index file")
    if len(raw) < _HEADER.size + 8 + 4:
        raise DataError(f"{path}: truncated index file")
    payload, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != crc:
        raise DataError(f"{path}: checksum mismatch")
    _, version, n = _HEADER.unpack_from(payload)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    off_end = _HEADER.size + 8 * (n + 1)
    if len(payload) < off_end:
        raise DataError(f"{path}: truncated offsets")
    offsets = np.frombuffer(payload, dtype="<u8", count=n + 1, offset=_HEADER.size).astype(np.int64)
    m = (len(payload) - off_end) // 4
    if offsets[0] != 0 or (np.diff(offsets) < 0).any() or offsets[-1] != m or (len(payload) - off_end) % 4:
        raise DataError(f"{path}: inconsistent offsets")
    neighbors = np.frombuffer(payload, dtype="<u4", count=m, offset=off_end)
    if m and int(neighbors.max()) >= n:
        raise DataError(f"{path}: neighbour id out of range [0, {n})")
    g = AdjacencyGraph.from_csr(offsets, neighbors.astype(np.int32))
    g.validate()
    if store is not None:
        g.attach_distances(store)
    return g
