"""``rnnd`` command line: build, search and benchmark graph indexes.

Exit codes: 0 success, 1 usage or parameter error, 2 data error (unreadable
or malformed files), 3 internal error. Machine-readable output goes to the
files named by flags, a human summary to stdout and errors to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import traceback
from typing import Optional, Sequence

from . import builder, nndescent
from ._parallel import default_threads
from .dataset import brute_force_gt, load_fvecs, load_ivecs, write_ivecs
from .errors import DataError, ParameterError
from .evaluation import EvalReport, report_aod_table, sweep_build, sweep_search
from .graph import degree_stats, deserialize, serialize
from .search import RandomEntry, SearchIndex, SearchParams

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    items = text.split(",")
    if any(not item.strip() for item in items):
        raise argparse.ArgumentTypeError(f"empty entry in list {text!r}")
    return [_positive(item.strip()) for item in items]


def _cap_list(text: str) -> list[Optional[int]]:
    """Comma-separated caps; ``inf`` means uncapped."""
    items = text.split(",")
    if any(not item.strip() for item in items):
        raise argparse.ArgumentTypeError(f"empty entry in list {text!r}")
    return [None if item.strip().lower() in ("inf", "none") else _positive(item.strip()) for item in items]


def _pair_list(text: str) -> list[tuple[int, int]]:
    pairs = []
    for item in text.split(","):
        parts = item.strip().lower().split("x")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected T1xT2 pairs like 4x15, got {item!r}")
        pairs.append((_positive(parts[0]), _positive(parts[1])))
    return pairs


def _print_degrees(g) -> None:
    print(degree_stats(g).summary())


def cmd_build(args) -> int:
    store = load_fvecs(args.input)
    params = builder.BuildParams(S=args.S, R=args.R, T1=args.T1, T2=args.T2, seed=args.seed, threads=args.threads)
    t0 = time.perf_counter()
    g = builder.build(store, params)
    seconds = time.perf_counter() - t0
    serialize(g, args.out)
    print(f"built n={store.n} d={store.d} threads={args.threads} build_seconds={seconds:.3f}")
    _print_degrees(g)
    return EXIT_OK


def cmd_nndescent_build(args) -> int:
    store = load_fvecs(args.input)
    t0 = time.perf_counter()
    g = nndescent.build_nndescent(
        store, K=args.K, S=args.S, iters=args.iter, seed=args.seed, threads=args.threads, pool_size=args.pool_size
    )
    seconds = time.perf_counter() - t0
    serialize(g, args.out)
    print(f"built nndescent n={store.n} d={store.d} threads={args.threads} build_seconds={seconds:.3f}")
    _print_degrees(g)
    return EXIT_OK


def cmd_gt(args) -> int:
    base = load_fvecs(args.base)
    queries = load_fvecs(args.queries)
    gt = brute_force_gt(base, queries, args.k, threads=args.threads)
    write_ivecs(args.out, gt)
    print(f"ground truth: {gt.n_queries} queries, k={gt.k}")
    return EXIT_OK


def _load_index(args):
    base = load_fvecs(args.base)
    g = deserialize(args.index)
    if g.n != base.n:
        raise DataError(f"index has {g.n} vertices but {args.base} has {base.n} vectors")
    return g, base


def cmd_search(args) -> int:
    g, base = _load_index(args)
    queries = load_fvecs(args.queries)
    params = SearchParams(L=args.L, K=args.K, k=args.k, entry=RandomEntry(seed=args.entry_seed))
    result = SearchIndex(g, base).batch_search(queries, params, threads=args.threads)
    write_ivecs(args.out, result.ids)
    print(f"searched {len(result)} queries L={args.L} K={args.K or 'inf'} k={args.k} "
          f"threads={args.threads} qps={result.qps:.0f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    g, base = _load_index(args)
    queries = load_fvecs(args.queries)
    gt = load_ivecs(args.gt, n=base.n)
    if gt.n_queries != queries.n:
        raise DataError(f"ground truth has {gt.n_queries} rows but there are {queries.n} queries")
    report = sweep_search(
        g, base, queries, gt, args.L, args.K, threads=args.threads, repeats=args.repeats,
        dataset=args.dataset, method=args.method,
    )
    report.write_csv(args.csv)
    print(report.summary())
    return EXIT_OK


def cmd_sweep_t(args) -> int:
    base = load_fvecs(args.base)
    queries = load_fvecs(args.queries)
    gt = load_ivecs(args.gt, n=base.n)
    report = sweep_build(
        base, queries, gt, args.pairs, S=args.S, R=args.R, seed=args.seed, threads=args.threads,
        search_params=SearchParams(L=args.L, K=args.K), repeats=args.repeats, dataset=args.dataset,
    )
    report.write_csv(args.csv)
    print(report.summary())
    return EXIT_OK


def cmd_stats(args) -> int:
    g = deserialize(args.index)
    if args.base:
        g.attach_distances(load_fvecs(args.base))
    caps = args.K or []
    for K in [None] + caps:
        st = degree_stats(g, K)
        print(st.summary())
        if K is None:
            print("out-degree histogram: " + " ".join(f"{k}:{c}" for k, c in enumerate(st.out_hist) if c))
            print("in-degree histogram: " + " ".join(f"{k}:{c}" for k, c in enumerate(st.in_hist) if c))
    print(EvalReport(aod_table=report_aod_table(g, caps)).summary())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rnnd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="per-iteration log lines on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    threads = dict(type=_positive, default=default_threads(), help="worker threads (default: all cores)")

    p = sub.add_parser("build", help="build an RNN-Descent index")
    p.add_argument("--input", required=True, help="base vectors (.fvecs)")
    p.add_argument("--out", required=True, help="index file to write")
    p.add_argument("--S", type=_positive, default=builder.DEFAULT_S, help="initial random out-degree")
    p.add_argument("--R", type=_positive, default=builder.DEFAULT_R, help="degree cap of the reverse-edge phase")
    p.add_argument("--T1", type=_positive, default=builder.DEFAULT_T1, help="outer iterations")
    p.add_argument("--T2", type=_positive, default=builder.DEFAULT_T2, help="update passes per outer iteration")
    p.add_argument("--seed", type=int, default=builder.DEFAULT_SEED)
    p.add_argument("--threads", **threads)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("nndescent-build", help="build an NN-Descent K-NN graph (baseline)")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--K", type=_positive, default=nndescent.DEFAULT_K)
    p.add_argument("--S", type=_positive, default=nndescent.DEFAULT_S, help="new neighbours joined per iteration")
    p.add_argument("--iter", type=_positive, default=nndescent.DEFAULT_ITERS)
    p.add_argument("--pool-size", type=_positive, default=None, help="candidate pool size (default 2K)")
    p.add_argument("--seed", type=int, default=builder.DEFAULT_SEED)
    p.add_argument("--threads", **threads)
    p.set_defaults(func=cmd_nndescent_build)

    p = sub.add_parser("gt", help="exact ground truth by brute force")
    p.add_argument("--base", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=_positive, required=True)
    p.add_argument("--out", required=True, help="ground truth to write (.ivecs)")
    p.add_argument("--threads", **threads)
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("search", help="search an index, writing top-k ids")
    p.add_argument("--index", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--L", type=_positive, default=64, help="candidate pool size")
    p.add_argument("--K", type=_positive, default=None, help="out-degree cap (default uncapped)")
    p.add_argument("--k", type=_positive, default=1)
    p.add_argument("--out", required=True, help="result ids (.ivecs)")
    p.add_argument("--entry-seed", type=int, default=7)
    p.add_argument("--threads", **threads)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bench", help="recall/QPS sweep over L and K")
    p.add_argument("--index", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--L", type=_int_list, required=True, help="comma-separated pool sizes")
    p.add_argument("--K", type=_cap_list, default=[None], help="comma-separated caps, 'inf' for none")
    p.add_argument("--csv", required=True)
    p.add_argument("--dataset", default="")
    p.add_argument("--method", default="rnn-descent")
    p.add_argument("--repeats", type=_positive, default=3)
    p.add_argument("--threads", **threads)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep-t", help="build and search for several (T1, T2) with a fixed product")
    p.add_argument("--base", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--pairs", type=_pair_list, default=[(1, 60), (2, 30), (4, 15), (6, 10)])
    p.add_argument("--S", type=_positive, default=builder.DEFAULT_S)
    p.add_argument("--R", type=_positive, default=builder.DEFAULT_R)
    p.add_argument("--L", type=_positive, default=32)
    p.add_argument("--K", type=_positive, default=32)
    p.add_argument("--seed", type=int, default=builder.DEFAULT_SEED)
    p.add_argument("--csv", required=True)
    p.add_argument("--dataset", default="")
    p.add_argument("--repeats", type=_positive, default=3)
    p.add_argument("--threads", **threads)
    p.set_defaults(func=cmd_sweep_t)

    p = sub.add_parser("stats", help="degree histograms and AOD under caps")
    p.add_argument("--index", required=True)
    p.add_argument("--K", type=_int_list, default=None, help="comma-separated caps")
    p.add_argument("--base", default=None, help="vectors, to rank neighbours by recomputed distance")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ParameterError as e:
        print(f"rnnd {args.command}: parameter error: --{e.name}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print(f"rnnd {args.command}: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
