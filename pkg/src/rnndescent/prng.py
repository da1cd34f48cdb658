"""Counter-based pseudo random numbers built on SplitMix64.

Every random draw in the package is a pure function of ``(seed, stream,
counter)``::

    key   = splitmix64(seed XOR (stream * 0xD1B54A32D192ED03))
    value = splitmix64(key + counter * 0x9E3779B97F4A7C15)

where all arithmetic is modulo 2**64. Because no hidden state is carried
between draws the output is identical on every platform and independent of
thread scheduling. Derived quantities:

* ``uniform_f32``: ``(value >> 40) * 2**-24``, exactly representable, in [0, 1).
* ``bounded``: ``((value >> 32) * m) >> 32``, an integer in [0, m) for
  m < 2**32 (Lemire's multiply-shift; bias at most m / 2**32).
"""

import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STREAM_MUL = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_S40 = np.uint64(40)
_TWO_NEG_24 = np.float32(1.0 / 16777216.0)


@numba.njit(nogil=True, cache=True)
def splitmix64(x):
    z = np.uint64(x) + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(nogil=True, cache=True)
def stream_key(seed, stream):
    return splitmix64(np.uint64(seed) ^ (np.uint64(stream) * _STREAM_MUL))


@numba.njit(nogil=True, cache=True)
def draw(key, counter):
    return splitmix64(key + np.uint64(counter) * _GOLDEN)


@numba.njit(nogil=True, cache=True)
def uniform_f32(key, counter):
    return np.float32(draw(key, counter) >> _S40) * _TWO_NEG_24


@numba.njit(nogil=True, cache=True)
def bounded(key, counter, m):
    hi = draw(key, counter) >> _S32
    return np.int64((hi * np.uint64(m)) >> _S32)


@numba.njit(nogil=True, cache=True)
def sample_without_replacement(key, population, count, out):
    """Floyd's algorithm: fill ``out[:count]`` with distinct ints in [0, population).

    Uses exactly ``count`` draws. ``out`` order follows insertion, not value.
    """
    filled = 0
    counter = 0
    for j in range(population - count, population):
        t = bounded(key, counter, j + 1)
        counter += 1
        seen = False
        for i in range(filled):
            if out[i] == t:
                seen = True
                break
        out[filled] = j if seen else t
        filled += 1
    return filled


def seed_to_u64(seed: int) -> np.uint64:
    """Map any Python int (negative included) onto the 64-bit seed space."""
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def make_key(seed: int, stream: int) -> np.uint64:
    """Python-side :func:`stream_key`; keeps the result typed as uint64 for numba."""
    return np.uint64(stream_key(seed_to_u64(seed), np.uint64(stream)))


def sample_ids(population: int, count: int, seed: int, stream: int = 0) -> np.ndarray:
    """Return ``count`` distinct ids from ``range(population)``, seeded."""
    if not 0 <= count <= population:
        raise ValueError(f"cannot sample {count} of {population}")
    out = np.empty(count, dtype=np.int64)
    key = make_key(seed, stream)
    sample_without_replacement(key, population, count, out)
    return out
