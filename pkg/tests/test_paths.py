import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_paths
from leap.graph import Graph
from leap.paths import (
    AssemblerConfig,
    PathSet,
    assemble,
    count_paths,
    dump_paths,
    enumerate_paths,
    order_paths,
    path_weight,
)

UNCAPPED = AssemblerConfig(lengths=(2, 3, 4, 5), cap=None)


def complete(n):
    return Graph(n, [(a, b) for a in range(n) for b in range(a + 1, n)])


def test_triangle_single_two_hop_path(triangle):
    ps = enumerate_paths(triangle, 0, 1, 2, AssemblerConfig(lengths=(2,)))
    assert ps.paths == [(0, 2, 1)] and not ps.truncated


def test_k4_length_three():
    ps = enumerate_paths(complete(4), 0, 1, 3, UNCAPPED)
    assert sorted(ps.paths) == [(0, 2, 3, 1), (0, 3, 2, 1)]


def test_k6_cap_truncates():
    ps = enumerate_paths(complete(6), 0, 1, 2, AssemblerConfig(lengths=(2,), cap=2))
    assert len(ps) == 2 and ps.truncated
    assert len(set(ps.paths)) == 2
    assert count_paths(complete(6), 0, 1, 2) == 4


def test_k6_length_four_count():
    # ordered choices of 3 interior nodes out of 4
    assert count_paths(complete(6), 0, 1, 4) == 24


def test_disconnected_pair_gives_empty_sets():
    g = Graph(4, [(0, 1), (2, 3)])
    sets = assemble(g, 0, 3, AssemblerConfig())
    assert list(sets) == [3, 4]
    assert all(len(ps) == 0 and not ps.truncated for ps in sets.values())


def test_assemble_single_length(triangle):
    sets = assemble(triangle, 0, 1, AssemblerConfig(lengths=(2,)))
    assert list(sets) == [2] and len(sets[2]) == 1


def test_assemble_respects_length_order(toy6):
    sets = assemble(toy6, 0, 5, AssemblerConfig(lengths=(4, 3)))
    assert list(sets) == [4, 3]


def test_direct_edge_never_used(toy6):
    for l in (2, 3, 4):
        for p in enumerate_paths(toy6, 1, 2, l, UNCAPPED):
            assert (p[0], p[1]) != (1, 2)
            assert len(p) == l + 1


@pytest.mark.parametrize("bad", [dict(lengths=()), dict(lengths=(1, 3)), dict(cap=0), dict(lengths=(3, 3))])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        AssemblerConfig(**bad)


def test_same_endpoints_rejected(toy6):
    with pytest.raises(ValueError):
        enumerate_paths(toy6, 2, 2, 3, UNCAPPED)


def test_sampling_is_seeded_and_repeatable():
    g = complete(8)
    cfg = AssemblerConfig(lengths=(3,), cap=5, seed=11)
    a = enumerate_paths(g, 0, 1, 3, cfg)
    b = enumerate_paths(g, 0, 1, 3, cfg)
    c = enumerate_paths(g, 0, 1, 3, AssemblerConfig(lengths=(3,), cap=5, seed=12))
    assert a.paths == b.paths
    assert a.paths != c.paths


def test_sampling_is_uniform():
    # 4 two-hop paths in K6, cap 2: each should appear in half the samples
    g = complete(6)
    counts = Counter()
    n = 4000
    for s in range(n):
        counts.update(enumerate_paths(g, 0, 1, 2, AssemblerConfig(lengths=(2,), cap=2, seed=s)).paths)
    assert len(counts) == 4
    for c in counts.values():
        assert abs(c / n - 0.5) < 0.04


def test_directed_traversal_flag():
    g = Graph(3, [(0, 2), (1, 2)], directed=True)
    assert enumerate_paths(g, 0, 1, 2, AssemblerConfig(lengths=(2,), respect_direction=False)).paths == [(0, 2, 1)]
    assert enumerate_paths(g, 0, 1, 2, AssemblerConfig(lengths=(2,), respect_direction=True)).paths == []


def test_order_paths_weighted():
    g = Graph(4, [(0, 1, 1.0), (1, 3, 2.0), (0, 2, 0.5), (2, 3, 0.5)])
    ps = PathSet(2, [(0, 2, 3), (0, 1, 3)])
    assert order_paths(ps, g).paths == [(0, 1, 3), (0, 2, 3)]
    assert path_weight(g, (0, 1, 3)) == 3.0


def test_order_paths_ties_lexicographic():
    g = Graph(4, [(0, 1, 1.0), (1, 3, 1.0), (0, 2, 1.0), (2, 3, 1.0)])
    assert order_paths(PathSet(2, [(0, 2, 3), (0, 1, 3)]), g).paths == [(0, 1, 3), (0, 2, 3)]


def test_order_paths_unweighted_lexicographic(toy6):
    ps = PathSet(2, [(0, 2, 3), (0, 1, 3)])
    assert order_paths(ps, toy6).paths == [(0, 1, 3), (0, 2, 3)]


def test_path_weight_against_direction_uses_reverse_edge():
    g = Graph(3, [(0, 1, 0.25), (2, 1, -0.5)], directed=True)
    assert path_weight(g, (0, 1, 2)) == -0.25


def test_dump_paths_format(triangle):
    buf = io.StringIO()
    dump_paths(assemble(triangle, 0, 1, AssemblerConfig(lengths=(2,))), buf)
    assert buf.getvalue() == "# length 2 paths=1 truncated=0\n0 2 1\n"


@st.composite
def small_graphs(draw, directed=False):
    n = draw(st.integers(3, 8))
    cand = [(a, b) for a in range(n) for b in range(n) if a != b and (directed or a < b)]
    chosen = draw(st.lists(st.sampled_from(cand), unique=True, max_size=len(cand)))
    return Graph(n, chosen, directed=directed)


@settings(max_examples=60, deadline=None)
@given(g=small_graphs(), data=st.data())
def test_enumeration_matches_permutation_oracle(g, data):
    u = data.draw(st.integers(0, g.node_count - 1))
    v = data.draw(st.integers(0, g.node_count - 1).filter(lambda x: x != u))
    for l in (2, 3, 4, 5):
        got = enumerate_paths(g, u, v, l, UNCAPPED).paths
        assert len(got) == len(set(got))
        assert set(got) == brute_force_paths(g, u, v, l)


@settings(max_examples=40, deadline=None)
@given(g=small_graphs(directed=True), data=st.data())
def test_directed_enumeration_matches_oracle(g, data):
    u = data.draw(st.integers(0, g.node_count - 1))
    v = data.draw(st.integers(0, g.node_count - 1).filter(lambda x: x != u))
    cfg = AssemblerConfig(lengths=(2, 3, 4), cap=None, respect_direction=True)
    for l in (2, 3, 4):
        assert set(enumerate_paths(g, u, v, l, cfg).paths) == brute_force_paths(g, u, v, l, directed=True)


@settings(max_examples=40, deadline=None)
@given(g=small_graphs(), cap=st.integers(1, 6), seed=st.integers(0, 2**40), data=st.data())
def test_capped_sets_are_valid_subsets(g, cap, seed, data):
    u = data.draw(st.integers(0, g.node_count - 1))
    v = data.draw(st.integers(0, g.node_count - 1).filter(lambda x: x != u))
    cfg = AssemblerConfig(lengths=(3,), cap=cap, seed=seed)
    full = brute_force_paths(g, u, v, 3)
    ps = enumerate_paths(g, u, v, 3, cfg)
    assert len(ps) == min(cap, len(full))
    assert ps.truncated == (len(full) > cap)
    assert len(set(ps.paths)) == len(ps)
    assert set(ps.paths) <= full
    assert ps.paths == enumerate_paths(g, u, v, 3, cfg).paths
    for p in ps:
        assert all(g.has_edge(a, b) for a, b in zip(p, p[1:]))


def test_large_fanout_capped_memory():
    # K40 has 38*37*36 = 50616 length-4 paths per pair; only 50 are materialised
    g = complete(40)
    ps = enumerate_paths(g, 0, 1, 4, AssemblerConfig(lengths=(4,), cap=50))
    assert len(ps) == 50 and ps.truncated
    assert ps.as_array().shape == (50, 5)
    assert np.all(ps.as_array()[:, 0] == 0) and np.all(ps.as_array()[:, -1] == 1)
