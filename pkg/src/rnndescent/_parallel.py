import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    return os.cpu_count() or 1


def chunk_bounds(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n)) if n > 0 else 1
    step, extra = divmod(n, parts)
    bounds = []
    lo = 0
    for i in range(parts):
        hi = lo + step + (1 if i < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def run_chunked(fn, n: int, threads: int, chunks_per_thread: int = 4) -> None:
    """Call ``fn(lo, hi)`` over a partition of ``range(n)``.

    ``fn`` is expected to release the GIL (nogil numba kernels); with
    ``threads == 1`` everything runs inline, in order.
    """
    if threads <= 1 or n <= 1:
        fn(0, n)
        return
    bounds = chunk_bounds(n, threads * chunks_per_thread)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(fn, lo, hi) for lo, hi in bounds]:
            fut.result()
