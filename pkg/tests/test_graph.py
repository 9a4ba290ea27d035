import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leap.graph import (
    Graph,
    GraphFormatError,
    LabeledPairSet,
    load_edge_list,
    normalize_weights,
    read_graph,
    read_id_map,
    sample_negative_pairs,
    split_edges,
    write_graph,
    write_id_map,
)


def test_triangle_from_three_lines():
    g = load_edge_list("1 2\n2 3\n1 3\n")
    assert g.node_count == 3 and g.edge_count == 3
    assert not g.directed and not g.weighted


def test_ids_reindexed_by_first_appearance():
    g = load_edge_list("# comment\n10 7\n\n7 42\n")
    assert g.labels == ("10", "7", "42")
    assert g.edge_pairs() == [(0, 1), (1, 2)]


def test_duplicate_edges_keep_last_weight():
    g = load_edge_list("a,b,1\nb,c,2\na,b,5\n", directed=True, weighted=True, delimiter=",")
    assert g.edge_count == 2
    assert g.weight(0, 1) == 5.0


def test_undirected_duplicate_in_reverse_collapses():
    g = load_edge_list("1 2\n2 1\n")
    assert g.edge_count == 1


def test_extra_columns_tolerated_when_requested():
    g = load_edge_list("1,2,10,1289241911\n2,1,-3,1289241942\n", directed=True, weighted=True, delimiter=",", extra_columns=True)
    assert g.edge_count == 2 and g.weight(1, 0) == -3.0


@pytest.mark.parametrize(
    "text, kwargs, line",
    [
        ("1 2\n3\n", {}, 2),
        ("1 2\n2 2\n", {}, 2),
        ("1 2 0.5\n", {}, 1),
        ("1 2\n2 3 x\n", {"weighted": True}, 1),
        ("1 2 1\n2 3 nan\n", {"weighted": True}, 2),
    ],
)
def test_malformed_lines_report_line_number(text, kwargs, line):
    with pytest.raises(GraphFormatError) as exc:
        load_edge_list(text, **kwargs)
    assert exc.value.line_no == line
    assert f"line {line}" in str(exc.value)


def test_weight_column_error_mentions_flag():
    with pytest.raises(GraphFormatError, match="weighted=False"):
        load_edge_list("1 2 0.5\n")


@pytest.mark.parametrize(
    "edges, msg",
    [
        ([(0, 0)], "self-loop"),
        ([(0, 3)], "outside"),
        ([(0, 1), (1, 0)], "duplicate"),
        ([(0, 1, 1.0), (1, 2)], "all edges"),
    ],
)
def test_graph_invariants(edges, msg):
    with pytest.raises(ValueError, match=msg):
        Graph(3, edges)


def test_graph_is_immutable(triangle):
    with pytest.raises(AttributeError):
        triangle.node_count = 5


def test_neighbor_lookup_symmetric(toy6):
    for u in range(toy6.node_count):
        for v in toy6.neighbors(u):
            assert u in toy6.neighbors(v)
            assert toy6.has_edge(u, v) and toy6.has_edge(v, u)


def test_directed_adjacency_lists():
    g = Graph(3, [(0, 1, 0.5), (2, 1, -1.0)], directed=True)
    assert g.successors(0) == (1,) and g.predecessors(1) == (0, 2)
    assert g.neighbors(1) == (0, 2)
    assert not g.has_edge(1, 0)
    assert g.weight(1, 0) is None and g.weight(2, 1) == -1.0


def test_graph_file_round_trip(toy6):
    g = Graph(4, [(0, 1, 0.1), (2, 1, -0.30000000000000004), (3, 0, 1.0)], directed=True)
    for graph in (g, toy6):
        buf = io.StringIO()
        write_graph(graph, buf)
        buf.seek(0)
        back = read_graph(buf)
        assert back.edges() == graph.edges()
        assert back.directed == graph.directed and back.node_count == graph.node_count


def test_id_map_round_trip():
    g = load_edge_list("x y\ny z\n")
    buf = io.StringIO()
    write_id_map(g, buf)
    buf.seek(0)
    assert read_id_map(buf) == list(g.labels)


def test_normalize_ratings_scale():
    g = Graph(3, [(0, 1, 10.0), (1, 2, -5.0), (2, 0, 2.0)], directed=True)
    n = normalize_weights(g)
    assert n.weight(0, 1) == 1.0 and n.weight(1, 2) == -0.5 and n.weight(2, 0) == 0.2


def test_normalize_all_zero_fails():
    with pytest.raises(ValueError, match="zero"):
        normalize_weights(Graph(2, [(0, 1, 0.0)]))


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=20))
def test_normalized_weights_in_unit_interval(ws):
    if max(abs(w) for w in ws) == 0:
        return
    g = Graph(len(ws) + 1, [(i, i + 1, w) for i, w in enumerate(ws)])
    out = [w for _, _, w in normalize_weights(g).edges()]
    assert all(-1.0 <= w <= 1.0 for w in out)
    assert max(abs(w) for w in out) == 1.0


def test_labeled_pair_set_validation():
    with pytest.raises(ValueError):
        LabeledPairSet([(0, 1)], [1.0, 0.0])
    with pytest.raises(ValueError):
        LabeledPairSet([(0, 1), (0, 1)], [1.0, 0.0])


def test_labeled_pair_set_csv_round_trip():
    s = LabeledPairSet([(0, 1), (2, 3)], [1.0, -0.25])
    buf = io.StringIO()
    s.write_csv(buf)
    buf.seek(0)
    back = LabeledPairSet.read_csv(buf)
    assert back.pairs == s.pairs and np.array_equal(back.labels, s.labels)


def test_negative_pairs_are_non_edges(toy6):
    neg = sample_negative_pairs(toy6, 5, seed=1)
    assert len(set(neg)) == 5
    assert all(not toy6.has_edge(u, v) and u < v for u, v in neg)


def test_negative_pairs_insufficient(triangle):
    with pytest.raises(ValueError, match="non-edges"):
        sample_negative_pairs(triangle, 1, seed=0)


def test_negative_pairs_dense_graph_exhaustive():
    # K5 minus two edges: rejection sampling barely ever hits, the fallback must
    edges = [(a, b) for a in range(5) for b in range(a + 1, 5) if (a, b) not in ((0, 1), (2, 3))]
    neg = sample_negative_pairs(Graph(5, edges), 2, seed=3)
    assert sorted(neg) == [(0, 1), (2, 3)]


def _random_graph(seed, n=30, p=0.2, weighted=False, directed=False):
    rng = np.random.default_rng(seed)
    edges = []
    for a in range(n):
        for b in range(n):
            if a == b or (not directed and b < a):
                continue
            if rng.random() < p:
                edges.append((a, b, float(rng.uniform(-1, 1))) if weighted else (a, b))
    return Graph(n, edges, directed=directed)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), frac=st.sampled_from([0.1, 0.2, 0.5]))
def test_split_invariants(seed, frac):
    g = _random_graph(seed)
    s = split_edges(g, frac, seed)
    pos_test = [p for p, y in zip(s.test_set.pairs, s.test_set.labels) if y == 1]
    assert len(pos_test) == int(round(frac * g.edge_count))
    assert not set(s.train_set.pairs) & set(s.test_set.pairs)
    assert not any(s.train_graph.has_edge(u, v) for u, v in pos_test)
    assert s.train_graph.edge_count == g.edge_count - len(pos_test)
    for pairs, labels in ((s.train_set.pairs, s.train_set.labels), (s.test_set.pairs, s.test_set.labels)):
        assert labels.sum() * 2 == len(labels)
        for (u, v), y in zip(pairs, labels):
            assert g.has_edge(u, v) == bool(y)


def test_split_deterministic_per_seed():
    g = _random_graph(7)
    a, b, c = split_edges(g, 0.1, 3), split_edges(g, 0.1, 3), split_edges(g, 0.1, 4)
    assert a.test_set.pairs == b.test_set.pairs and a.train_set.pairs == b.train_set.pairs
    assert a.test_set.pairs != c.test_set.pairs


def test_usair_sized_split_arithmetic():
    # 2126 edges at 10%: round(212.6) = 213 positives and as many negatives
    rng = np.random.default_rng(0)
    pairs = set()
    while len(pairs) < 2126:
        u, v = sorted(rng.integers(0, 332, 2).tolist())
        if u != v:
            pairs.add((u, v))
    s = split_edges(Graph(332, sorted(pairs)), 0.1, 0)
    assert int(s.test_set.labels.sum()) == 213 and len(s.test_set) == 426


def test_wsn_split_uses_edges_and_weights():
    g = _random_graph(2, weighted=True, directed=True, p=0.1)
    s = split_edges(g, 0.3, 0, task="wsn")
    assert len(s.test_set) == int(round(0.3 * g.edge_count))
    assert len(s.train_set) + len(s.test_set) == g.edge_count
    for (u, v), y in zip(s.test_set.pairs, s.test_set.labels):
        assert g.weight(u, v) == y and not s.train_graph.has_edge(u, v)


def test_wsn_split_needs_weights(toy6):
    with pytest.raises(ValueError, match="weighted"):
        split_edges(toy6, 0.2, 0, task="wsn")
