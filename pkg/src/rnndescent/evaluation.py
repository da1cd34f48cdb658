"""Recall/QPS measurement, Pareto marking and parameter sweeps."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .builder import BuildParams, build
from .dataset import GroundTruth, VectorStore
from .errors import DataError, ParameterError
from .graph import AdjacencyGraph, DegreeStats, degree_stats
from .metric import l2_sq
from .search import BatchResult, SearchIndex, SearchParams

CSV_COLUMNS = (
    "dataset", "n", "d", "method", "S", "R", "T1", "T2", "L", "K",
    "recall_at_1", "qps", "mean_latency_us", "dist_comps_per_query", "build_seconds", "pareto",
)


@dataclass
class EvalRow:
    dataset: str = ""
    n: int = 0
    d: int = 0
    method: str = "rnn-descent"
    S: Optional[int] = None
    R: Optional[int] = None
    T1: Optional[int] = None
    T2: Optional[int] = None
    L: Optional[int] = None
    K: Optional[int] = None
    recall_at_1: float = 0.0
    qps: float = 0.0
    mean_latency_us: float = 0.0
    dist_comps_per_query: float = 0.0
    build_seconds: Optional[float] = None
    pareto: bool = False
    threads: int = field(default=1, compare=False)

    def csv_values(self) -> list:
        out = []
        for name in CSV_COLUMNS:
            value = getattr(self, name)
            if name == "K" and value is None and self.L is not None:
                value = "inf"
            elif isinstance(value, bool):
                value = int(value)
            elif isinstance(value, float):
                value = f"{value:.6g}"
            elif value is None:
                value = ""
            out.append(value)
        return out

    def summary(self) -> str:
        k = "inf" if self.K is None else self.K
        parts = [f"{self.method}"]
        if self.T1 is not None:
            parts.append(f"T1={self.T1} T2={self.T2}")
        if self.L is not None:
            parts.append(f"L={self.L} K={k}")
        parts.append(f"R@1={self.recall_at_1:.4f} QPS={self.qps:.0f}")
        if self.build_seconds is not None:
            parts.append(f"build={self.build_seconds:.2f}s")
        parts.append(f"threads={self.threads}")
        if self.pareto:
            parts.append("*")
        return " ".join(parts)


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    degrees: Optional[DegreeStats] = None
    aod_table: list[tuple[Optional[int], float]] = field(default_factory=list)
    build_seconds: Optional[float] = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(row.csv_values())

    def summary(self) -> str:
        lines = [row.summary() for row in self.rows]
        for K, aod in self.aod_table:
            lines.append(f"AOD K={'inf' if K is None else K}: {aod:.2f}")
        return "\n".join(lines)


def _top1(results) -> tuple[np.ndarray, Optional[np.ndarray]]:
    if isinstance(results, BatchResult):
        return results.ids[:, 0], results.distances[:, 0]
    if isinstance(results, np.ndarray):
        return results.reshape(len(results), -1)[:, 0], None
    ids = np.array([r.ids[0] if len(r.ids) else -1 for r in results], dtype=np.int64)
    dist = np.array([r.distances[0] if len(r.ids) else np.inf for r in results], dtype=np.float32)
    return ids, dist


def recall_at_1(
    results,
    gt: GroundTruth,
    base: Optional[VectorStore] = None,
    queries: Optional[VectorStore] = None,
) -> float:
    """Fraction of queries whose returned nearest vertex is a true nearest neighbour.

    A returned id that differs from the ground-truth id still counts when its
    distance to the query equals the ground-truth distance exactly (the two
    sides broke a tie differently). Distances come from ``results`` and
    ``gt.distances`` when present, else are recomputed from ``base``/``queries``.
    """
    ids, dist = _top1(results)
    if len(ids) != gt.n_queries:
        raise DataError(f"result count {len(ids)} != ground truth count {gt.n_queries}")
    if len(ids) == 0:
        raise DataError("no queries")
    truth = gt.ids[:, 0]
    hit = ids == truth
    miss = np.flatnonzero(~hit & (ids >= 0))
    if miss.size:
        for i in miss:
            got = dist[i] if dist is not None else None
            want = gt.distances[i, 0] if gt.distances is not None else None
            if (got is None or want is None) and base is not None and queries is not None:
                got = l2_sq(queries[i], base[ids[i]])
                want = l2_sq(queries[i], base[truth[i]])
            if got is not None and want is not None and got == want:
                hit[i] = True
    return float(hit.mean())


def mark_pareto(rows: Sequence[EvalRow]) -> None:
    """Set ``pareto`` on rows no other row beats on both recall and QPS.

    Row ``a`` dominates ``b`` when ``a`` is at least as good on both axes and
    strictly better on one, so exact duplicates are all kept.
    """
    for row in rows:
        row.pareto = not any(
            other is not row
            and other.recall_at_1 >= row.recall_at_1
            and other.qps >= row.qps
            and (other.recall_at_1 > row.recall_at_1 or other.qps > row.qps)
            for other in rows
        )


def timed_search(index: SearchIndex, queries, params: SearchParams, threads: int = 1, repeats: int = 3) -> BatchResult:
    """Warm-up batch, then ``repeats`` timed batches; ``seconds`` is their median."""
    index.batch_search(queries, params, threads)
    runs = [index.batch_search(queries, params, threads) for _ in range(max(1, repeats))]
    result = runs[-1]
    result.seconds = statistics.median(r.seconds for r in runs)
    return result


def _row_from(result: BatchResult, gt, base, queries, **meta) -> EvalRow:
    nq = len(result)
    return EvalRow(
        recall_at_1=recall_at_1(result, gt, base, queries),
        qps=result.qps,
        mean_latency_us=1e6 * result.seconds / nq,
        dist_comps_per_query=float(result.distance_computations.mean()),
        **meta,
    )


def sweep_search(
    graph: AdjacencyGraph,
    store: VectorStore,
    queries: VectorStore,
    gt: GroundTruth,
    L_values: Iterable[int],
    K_values: Iterable[Optional[int]],
    threads: int = 1,
    repeats: int = 3,
    **meta,
) -> EvalReport:
    """One row per (L, K) pair, Pareto-marked. ``meta`` fills descriptive columns."""
    L_values = list(L_values)
    K_values = list(K_values)
    if not L_values or not K_values:
        raise ParameterError("L/K", "sweep lists must be non-empty")
    index = SearchIndex(graph, store)
    report = EvalReport()
    for L in L_values:
        for K in K_values:
            params = SearchParams(L=L, K=K)
            result = timed_search(index, queries, params, threads, repeats)
            report.rows.append(
                _row_from(result, gt, store, queries, L=L, K=K, n=store.n, d=store.d, threads=threads, **meta)
            )
    mark_pareto(report.rows)
    return report


def sweep_build(
    store: VectorStore,
    queries: VectorStore,
    gt: GroundTruth,
    pairs: Sequence[tuple[int, int]],
    S: int = 20,
    R: int = 96,
    seed: int = 2023,
    threads: int = 1,
    search_params: SearchParams = SearchParams(L=32, K=32),
    repeats: int = 3,
    **meta,
) -> EvalReport:
    """Build once per (T1, T2) pair (all pairs share one product T1*T2) and search each."""
    pairs = [tuple(p) for p in pairs]
    if not pairs:
        raise ParameterError("pairs", "need at least one (T1, T2) pair")
    products = {t1 * t2 for t1, t2 in pairs}
    if any(t1 < 1 or t2 < 1 for t1, t2 in pairs) or len(products) != 1:
        raise ParameterError("pairs", f"need T1, T2 >= 1 with a constant product, got {pairs}")
    report = EvalReport()
    for t1, t2 in pairs:
        params = BuildParams(S=S, R=R, T1=t1, T2=t2, seed=seed, threads=threads)
        t0 = time.perf_counter()
        g = build(store, params)
        seconds = time.perf_counter() - t0
        result = timed_search(SearchIndex(g, store), queries, search_params, threads, repeats)
        report.rows.append(
            _row_from(
                result, gt, store, queries,
                S=S, R=R, T1=t1, T2=t2, L=search_params.L, K=search_params.K,
                n=store.n, d=store.d, build_seconds=seconds, threads=threads, **meta,
            )
        )
    mark_pareto(report.rows)
    return report


def report_aod_table(graph: AdjacencyGraph, K_values: Iterable[int] = ()) -> list[tuple[Optional[int], float]]:
    """Average out-degree under each cap ``K``, followed by the uncapped value (``None``)."""
    rows: list[tuple[Optional[int], float]] = [(K, degree_stats(graph, K).aod) for K in K_values]
    rows.append((None, degree_stats(graph).aod))
    return rows

