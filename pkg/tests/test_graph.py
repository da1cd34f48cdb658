import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnndescent.dataset import synth_uniform
from rnndescent.errors import DataError, ParameterError
from rnndescent.graph import (
    NEW,
    AdjacencyGraph,
    degree_stats,
    deserialize,
    random_init,
    serialize,
)


def test_random_init_pair(points_1d):
    g = random_init(points_1d(0.0, 1.0), S=1, seed=0)
    assert g.adjacency() == [[1], [0]]
    assert g.neighbor_distances(0).tolist() == [1.0]


def test_random_init_rows(small_store):
    g = random_init(small_store, S=20, seed=5)
    for u in range(small_store.n):
        row = g.neighbors(u)
        assert len(row) == 20
        assert len(set(row.tolist())) == 20
        assert u not in row
        assert (g.neighbor_flags(u) == NEW).all()
    g.validate()


def test_random_init_deterministic_across_threads(small_store):
    a = random_init(small_store, S=7, seed=5, threads=1)
    b = random_init(small_store, S=7, seed=5, threads=4)
    assert a.adjacency() == b.adjacency()
    assert a.adjacency() != random_init(small_store, S=7, seed=6).adjacency()


def test_random_init_full_degree(points_1d):
    g = random_init(points_1d(0, 1, 2, 3), S=3, seed=1)
    assert [sorted(r) for r in g.adjacency()] == [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]


def test_random_init_bad_S(points_1d):
    with pytest.raises(ParameterError):
        random_init(points_1d(0, 1, 2), S=3, seed=1)
    with pytest.raises(ParameterError):
        random_init(points_1d(0.0), S=1, seed=1)


def test_random_init_covers_all_targets(small_store):
    # every non-self id should be reachable as a first pick over many vertices
    g = random_init(small_store, S=1, seed=2)
    firsts = np.array([g.neighbors(u)[0] for u in range(small_store.n)])
    assert len(np.unique(firsts)) > small_store.n // 2


def test_degree_stats_uncapped_and_capped(small_store):
    g = random_init(small_store, S=20, seed=1)
    assert degree_stats(g).aod == 20.0
    st10 = degree_stats(g, K=10)
    assert st10.aod == 10.0
    assert st10.max_out == 10
    assert st10.out_hist[10] == small_store.n
    assert st10.in_hist.dot(np.arange(st10.in_hist.size)) == 10 * small_store.n


def test_degree_cap_keeps_nearest(points_1d):
    store = points_1d(0.0, 5.0, 1.0, 3.0)
    g = AdjacencyGraph.from_lists([[1, 2, 3], [], [], []], store)
    st = degree_stats(g, K=2)
    assert st.n_edges == 2
    from rnndescent.graph import capped_edges
    assert sorted(capped_edges(g, 2)[1].tolist()) == [2, 3]


@given(st.integers(0, 10**6), st.lists(st.integers(1, 30), min_size=2, max_size=6, unique=True))
@settings(max_examples=30, deadline=None)
def test_aod_monotone_in_cap(seed, caps):
    store = synth_uniform(60, 4, seed)
    g = random_init(store, S=12, seed=seed)
    caps = sorted(caps)
    aods = [degree_stats(g, K).aod for K in caps]
    assert all(a <= b for a, b in zip(aods, aods[1:]))
    assert aods[-1] <= degree_stats(g).aod


def random_graph(n, seed, max_deg):
    rng = np.random.default_rng(seed)
    lists = []
    for u in range(n):
        others = np.delete(np.arange(n), u)
        k = int(rng.integers(0, min(max_deg, n - 1) + 1))
        lists.append(rng.permutation(others)[:k].tolist())
    return AdjacencyGraph.from_lists(lists)


@given(st.integers(1, 40), st.integers(0, 10**6))
@settings(max_examples=80, deadline=None)
def test_serialize_round_trip(tmp_path_factory, n, seed):
    g = random_graph(n, seed, 8)
    p = tmp_path_factory.mktemp("idx") / "g.rnnd"
    serialize(g, p)
    h = deserialize(p)
    assert h.adjacency() == g.adjacency()
    serialize(h, p.with_suffix(".2"))
    assert p.read_bytes() == p.with_suffix(".2").read_bytes()


def test_file_layout(tmp_path):
    g = AdjacencyGraph.from_lists([[1], [0, 2], []])
    p = tmp_path / "g.rnnd"
    serialize(g, p)
    raw = p.read_bytes()
    body = (
        b"RNND" + struct.pack("<IQ", 1, 3) + struct.pack("<4Q", 0, 1, 3, 3) + struct.pack("<3I", 1, 0, 2)
    )
    assert raw == body + struct.pack("<I", zlib.crc32(body))


def test_empty_file_is_bad_magic(tmp_path):
    p = tmp_path / "e.rnnd"
    p.write_bytes(b"")
    with pytest.raises(DataError, match="magic"):
        deserialize(p)


def write_with_crc(p, body):
    p.write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def test_id_out_of_range(tmp_path):
    p = tmp_path / "bad.rnnd"
    write_with_crc(p, b"RNND" + struct.pack("<IQ", 1, 2) + struct.pack("<3Q", 0, 1, 1) + struct.pack("<I", 2))
    with pytest.raises(DataError, match="out of range"):
        deserialize(p)


def test_inconsistent_offsets(tmp_path):
    p = tmp_path / "bad.rnnd"
    write_with_crc(p, b"RNND" + struct.pack("<IQ", 1, 2) + struct.pack("<3Q", 0, 2, 1) + struct.pack("<I", 1))
    with pytest.raises(DataError, match="offsets"):
        deserialize(p)


def test_self_loop_rejected(tmp_path):
    p = tmp_path / "bad.rnnd"
    write_with_crc(p, b"RNND" + struct.pack("<IQ", 1, 2) + struct.pack("<3Q", 0, 1, 1) + struct.pack("<I", 0))
    with pytest.raises(DataError, match="self-loop"):
        deserialize(p)


def test_unknown_version(tmp_path):
    p = tmp_path / "bad.rnnd"
    write_with_crc(p, b"RNND" + struct.pack("<IQ", 9, 1) + struct.pack("<2Q", 0, 0))
    with pytest.raises(DataError, match="version"):
        deserialize(p)


def test_checksum_mismatch(tmp_path):
    g = AdjacencyGraph.from_lists([[1], [0]])
    p = tmp_path / "g.rnnd"
    serialize(g, p)
    raw = bytearray(p.read_bytes())
    raw[-6] ^= 0x01
    p.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="checksum"):
        deserialize(p)


def test_truncated(tmp_path):
    p = tmp_path / "t.rnnd"
    p.write_bytes(b"RNND\x01\x00")
    with pytest.raises(DataError, match="truncated"):
        deserialize(p)


def test_deserialize_with_store_sorts_rows(tmp_path, points_1d):
    store = points_1d(0.0, 4.0, 1.0)
    g = AdjacencyGraph.from_lists([[1, 2], [0], [0]])
    p = tmp_path / "g.rnnd"
    serialize(g, p)
    h = deserialize(p, store)
    assert h.neighbors(0).tolist() == [2, 1]
    assert h.neighbor_distances(0).tolist() == [1.0, 16.0]


def test_validate_catches_duplicates():
    with pytest.raises(DataError, match="duplicate"):
        AdjacencyGraph.from_lists([[1, 1], []])


def test_compact_preserves_rows(small_store):
    g = random_init(small_store, S=5, seed=3)
    before = g.adjacency()
    g.compact(slack_percent=50, slack_min=3)
    assert g.adjacency() == before
    assert (g.cap >= g.deg + 3).all()
