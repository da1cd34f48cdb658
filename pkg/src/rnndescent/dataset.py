"""Vector stores, ``.fvecs``/``.ivecs`` I/O, synthetic data and exact ground truth.

File layout (both formats, little-endian): a sequence of records, each an
int32 count ``d`` followed by ``d`` payload words (float32 for fvecs, int32
for ivecs). This is the distribution format of the SIFT1M/GIST1M benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from . import prng
from ._parallel import run_chunked
from .errors import DataError, ParameterError
from .metric import l2_sq_kernel

STREAM_SYNTH = 0x5EED0001
STREAM_CLUSTERED = 0x5EED0002


@dataclass(frozen=True)
class VectorStore:
    """``n`` vectors of dimension ``d`` held as a C-contiguous float32 array.

    Vertex ``i`` of any graph built over the store is row ``i``.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise DataError(f"vector data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DataError(f"need n >= 1 and d >= 1, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise DataError("vector data contains NaN or Inf")
        if data is self.data:
            data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i) -> np.ndarray:
        return self.data[i]

    def subset(self, start: int, stop: int) -> "VectorStore":
        return VectorStore(self.data[start:stop])


@dataclass(frozen=True)
class GroundTruth:
    """Per-query ids of the exact top-k neighbours, nearest first.

    ``distances`` is filled by :func:`brute_force_gt`; ground truth loaded
    from an ``.ivecs`` file has none.
    """

    ids: np.ndarray
    distances: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.int32)
        if ids.ndim != 2 or ids.shape[1] < 1:
            raise DataError(f"ground truth must be (queries, k>=1), got shape {ids.shape}")
        if ids.shape[1] > 1:
            srt = np.sort(ids, axis=1)
            if (srt[:, 1:] == srt[:, :-1]).any():
                raise DataError("ground truth row contains duplicate ids")
        object.__setattr__(self, "ids", ids)
        if self.distances is not None:
            dist = np.ascontiguousarray(self.distances, dtype=np.float32)
            if dist.shape != ids.shape:
                raise DataError("ground truth distances do not match ids shape")
            object.__setattr__(self, "distances", dist)

    @property
    def n_queries(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def __len__(self) -> int:
        return self.n_queries


def _read_records(path, payload_dtype) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if len(raw) == 0:
        raise DataError(f"{path}: empty file")
    if len(raw) % 4:
        raise DataError(f"{path}: truncated record (size {len(raw)} not a multiple of 4)")
    words = np.frombuffer(raw, dtype="<i4")
    d = int(words[0])
    if d <= 0:
        raise DataError(f"{path}: record 0 has non-positive dimension {d}")
    if words.size % (d + 1) == 0:
        table = words.reshape(-1, d + 1)
        bad = np.flatnonzero(table[:, 0] != d)
        if bad.size == 0:
            return table[:, 1:].view(payload_dtype).astype(payload_dtype.newbyteorder("="))
    # walk records to name the first inconsistency
    pos, rec = 0, 0
    while pos < words.size:
        rd = int(words[pos])
        if rd <= 0:
            raise DataError(f"{path}: record {rec} has non-positive dimension {rd}")
        if rd != d:
            raise DataError(f"{path}: dimension mismatch, record {rec} has d={rd}, expected {d}")
        if pos + 1 + rd > words.size:
            raise DataError(f"{path}: truncated record {rec}")
        pos += rd + 1
        rec += 1
    raise DataError(f"{path}: malformed file")


def _write_records(path, payload: np.ndarray) -> None:
    n, d = payload.shape
    table = np.empty((n, d + 1), dtype="<i4")
    table[:, 0] = d
    table[:, 1:] = payload.view("<i4") if payload.dtype.kind == "f" else payload
    with open(path, "wb") as f:
        f.write(table.tobytes())


def load_fvecs(path) -> VectorStore:
    return VectorStore(_read_records(path, np.dtype("<f4")))


def write_fvecs(path, store) -> None:
    data = store.data if isinstance(store, VectorStore) else np.asarray(store)
    _write_records(path, np.ascontiguousarray(data, dtype="<f4"))


def load_ivecs(path, n: Optional[int] = None) -> GroundTruth:
    """Load an ``.ivecs`` file; with ``n`` given, every id must lie in [0, n)."""
    ids = _read_records(path, np.dtype("<i4"))
    if n is not None and ids.size and (ids.min() < 0 or ids.max() >= n):
        raise DataError(f"{path}: id out of range [0, {n})")
    return GroundTruth(ids)


def write_ivecs(path, gt) -> None:
    ids = gt.ids if isinstance(gt, GroundTruth) else np.asarray(gt)
    _write_records(path, np.ascontiguousarray(ids, dtype="<i4"))


@numba.njit(nogil=True, cache=True)
def _fill_uniform(key, offset, out):
    for i in range(out.shape[0]):
        out[i] = prng.uniform_f32(key, offset + i)


def _check_shape(n: int, d: int) -> None:
    if n < 1:
        raise ParameterError("n", f"must be >= 1, got {n}")
    if d < 1:
        raise ParameterError("d", f"must be >= 1, got {d}")


def synth_uniform(n: int, d: int, seed: int) -> VectorStore:
    """I.i.d. uniform [0, 1) float32 values from the SplitMix64 stream of ``seed``.

    Element ``(i, j)`` is draw number ``i * d + j``, so the first rows of a
    larger store equal a smaller store with the same ``d`` and seed.
    """
    _check_shape(n, d)
    out = np.empty((n, d), dtype=np.float32)
    _fill_uniform(prng.make_key(seed, STREAM_SYNTH), 0, out.reshape(-1))
    return VectorStore(out)


def _gaussian(key, count: int, offset: int) -> np.ndarray:
    u = np.empty(2 * count, dtype=np.float32)
    _fill_uniform(key, offset, u)
    u1 = 1.0 - u[0::2].astype(np.float64)
    u2 = u[1::2].astype(np.float64)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def synth_clustered(
    n: int,
    d: int,
    seed: int,
    n_clusters: int = 32,
    intrinsic_dim: int = 32,
    noise: float = 0.05,
    center_spread: float = 0.7,
) -> VectorStore:
    """Clustered data on a low-dimensional linear manifold, scaled to [0, ~255].

    A stand-in for SIFT-like descriptors when the real files are absent: the
    ambient dimension is ``d`` but the intrinsic dimension is roughly
    ``intrinsic_dim``. Gaussians come from Box-Muller over the seeded stream.
    """
    _check_shape(n, d)
    key = prng.make_key(seed, STREAM_CLUSTERED)
    m = intrinsic_dim
    offset = 0
    centers = _gaussian(key, n_clusters * m, offset).reshape(n_clusters, m) * center_spread
    offset += 2 * n_clusters * m
    proj = _gaussian(key, m * d, offset).reshape(m, d) / np.sqrt(m)
    offset += 2 * m * d
    assign = np.empty(n, dtype=np.float32)
    _fill_uniform(key, offset, assign)
    offset += n
    labels = np.minimum((assign.astype(np.float64) * n_clusters).astype(np.int64), n_clusters - 1)
    latent = centers[labels] + _gaussian(key, n * m, offset).reshape(n, m)
    offset += 2 * n * m
    x = latent @ proj + noise * _gaussian(key, n * d, offset).reshape(n, d)
    x -= x.min()
    x *= 255.0 / max(float(x.max()), 1e-12)
    return VectorStore(x.astype(np.float32))


@numba.njit(nogil=True, cache=True, boundscheck=False)
def _topk_range(base, queries, k, lo, hi, out_ids, out_dist):
    n = base.shape[0]
    for qi in range(lo, hi):
        q = queries[qi]
        ids = out_ids[qi]
        dist = out_dist[qi]
        size = 0
        for j in range(n):
            dj = l2_sq_kernel(q, base[j])
            if size == k and not dj < dist[k - 1]:
                continue
            # insert after every entry with distance <= dj: equal distances keep lower id first
            pos = size if size < k else k - 1
            while pos > 0 and dist[pos - 1] > dj:
                if pos < k:
                    dist[pos] = dist[pos - 1]
                    ids[pos] = ids[pos - 1]
                pos -= 1
            dist[pos] = dj
            ids[pos] = j
            if size < k:
                size += 1


def brute_force_gt(base: VectorStore, queries: VectorStore, k: int, threads: int = 1) -> GroundTruth:
    """Exact top-``k`` by exhaustive scan; ties go to the lower base id."""
    if base.d != queries.d:
        raise DataError(f"dimension mismatch: base d={base.d}, queries d={queries.d}")
    if not 1 <= k <= base.n:
        raise ParameterError("k", f"must be in [1, {base.n}], got {k}")
    ids = np.empty((queries.n, k), dtype=np.int32)
    dist = np.empty((queries.n, k), dtype=np.float32)
    run_chunked(
        lambda lo, hi: _topk_range(base.data, queries.data, k, lo, hi, ids, dist),
        queries.n,
        threads,
    )
    return GroundTruth(ids, dist)

