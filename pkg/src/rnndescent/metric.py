"""Squared Euclidean distance, the one kernel every other module calls.

The square root is never taken: all graph decisions and rankings only compare
distances, and squaring is monotone on non-negative values.

Summation order is fixed so results are bit-reproducible: element ``i`` is
accumulated in float32 into lane ``i % 8``, and the eight lanes are combined
as ``((l0 + l1) + (l2 + l3)) + ((l4 + l5) + (l6 + l7))``. The lane layout lets
LLVM vectorise the loop without ``fastmath`` reassociation.
"""

import numba
import numpy as np

LANES = 8


@numba.njit(nogil=True, cache=True, boundscheck=False)
def l2_sq_kernel(a, b):
    d = a.shape[0]
    s0 = np.float32(0.0)
    s1 = np.float32(0.0)
    s2 = np.float32(0.0)
    s3 = np.float32(0.0)
    s4 = np.float32(0.0)
    s5 = np.float32(0.0)
    s6 = np.float32(0.0)
    s7 = np.float32(0.0)
    i = 0
    while i + 8 <= d:
        t0 = a[i] - b[i]
        t1 = a[i + 1] - b[i + 1]
        t2 = a[i + 2] - b[i + 2]
        t3 = a[i + 3] - b[i + 3]
        t4 = a[i + 4] - b[i + 4]
        t5 = a[i + 5] - b[i + 5]
        t6 = a[i + 6] - b[i + 6]
        t7 = a[i + 7] - b[i + 7]
        s0 += t0 * t0
        s1 += t1 * t1
        s2 += t2 * t2
        s3 += t3 * t3
        s4 += t4 * t4
        s5 += t5 * t5
        s6 += t6 * t6
        s7 += t7 * t7
        i += 8
    # tail elements keep their lane (i % 8)
    r = d - i
    if r > 0:
        t = a[i] - b[i]
        s0 += t * t
    if r > 1:
        t = a[i + 1] - b[i + 1]
        s1 += t * t
    if r > 2:
        t = a[i + 2] - b[i + 2]
        s2 += t * t
    if r > 3:
        t = a[i + 3] - b[i + 3]
        s3 += t * t
    if r > 4:
        t = a[i + 4] - b[i + 4]
        s4 += t * t
    if r > 5:
        t = a[i + 5] - b[i + 5]
        s5 += t * t
    if r > 6:
        t = a[i + 6] - b[i + 6]
        s6 += t * t
    return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))


@numba.njit(nogil=True, cache=True, boundscheck=False)
def l2_sq_rows(data, i, j):
    return l2_sq_kernel(data[i], data[j])


@numba.njit(nogil=True, cache=True, boundscheck=False)
def l2_sq_to_all(q, data, out):
    for j in range(data.shape[0]):
        out[j] = l2_sq_kernel(q, data[j])


def l2_sq(a, b) -> float:
    """Squared L2 distance between two vectors, computed in float32.

    >>> l2_sq([0.0, 0.0], [3.0, 4.0])
    25.0
    """
    a = np.ascontiguousarray(a, dtype=np.float32)
    b = np.ascontiguousarray(b, dtype=np.float32)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("l2_sq expects 1-D vectors")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape[0]} != {b.shape[0]}")
    return float(l2_sq_kernel(a, b))


def l2_sq_reference(a, b) -> float:
    """Float64 accumulation reference. Test use only; not on any hot path."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} != {b.shape}")
    diff = a - b
    return float(np.dot(diff, diff))
