"""Graph substrate: loading, weight normalization, edge splits and negative sampling.

Graphs are immutable once built. Node ids are dense integers ``0..N-1``; the
original identifiers from the source file are kept in ``Graph.labels``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

Pair = tuple[int, int]

GRAPH_HEADER = "# leap-graph v1"


class GraphFormatError(ValueError):
    """Raised when an edge-list file cannot be parsed."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class Graph:
    """Simple (no multi-edges, no self-loops) graph with optional real edge weights.

    Undirected graphs store every edge once as ``(min(u, v), max(u, v))``.
    """

    __slots__ = ("node_count", "directed", "weighted", "labels", "_edges", "_out", "_in", "_und")

    def __init__(
        self,
        node_count: int,
        edges: Iterable[Sequence],
        directed: bool = False,
        labels: Optional[Sequence[str]] = None,
    ):
        if node_count < 0:
            raise ValueError("node_count must be non-negative")
        edge_map: dict[Pair, Optional[float]] = {}
        n_weighted = 0
        for e in edges:
            u, v = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 and e[2] is not None else None
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u}, {v}) has an endpoint outside [0, {node_count})")
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            key = (u, v) if directed else (min(u, v), max(u, v))
            if key in edge_map:
                raise ValueError(f"duplicate edge {key}")
            if w is not None:
                if not math.isfinite(w):
                    raise ValueError(f"non-finite weight on edge {key}")
                n_weighted += 1
            edge_map[key] = w
        if 0 < n_weighted < len(edge_map):
            raise ValueError("either all edges carry a weight or none does")
        if labels is not None and len(labels) != node_count:
            raise ValueError("labels must have one entry per node")

        self.node_count = node_count
        self.directed = directed
        self.weighted = n_weighted > 0
        self.labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(node_count))
        self._edges = edge_map

        out: list[list[int]] = [[] for _ in range(node_count)]
        inn: list[list[int]] = [[] for _ in range(node_count)]
        for u, v in edge_map:
            out[u].append(v)
            inn[v].append(u)
            if not directed:
                out[v].append(u)
                inn[u].append(v)
        self._out = tuple(tuple(sorted(a)) for a in out)
        self._in = tuple(tuple(sorted(a)) for a in inn) if directed else self._out
        if directed:
            self._und = tuple(tuple(sorted(set(a) | set(b))) for a, b in zip(self._out, self._in))
        else:
            self._und = self._out

    def __setattr__(self, name, value):
        if hasattr(self, "_und"):
            raise AttributeError("Graph is immutable")
        object.__setattr__(self, name, value)

    def __repr__(self) -> str:
        kind = "directed" if self.directed else "undirected"
        w = ", weighted" if self.weighted else ""
        return f"Graph(N={self.node_count}, |E|={self.edge_count}, {kind}{w})"

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def edges(self) -> list[tuple[int, int, Optional[float]]]:
        """All edges as ``(u, v, w)`` in sorted key order (``w`` is None if unweighted)."""
        return [(u, v, self._edges[(u, v)]) for u, v in sorted(self._edges)]

    def edge_pairs(self) -> list[Pair]:
        return sorted(self._edges)

    def key(self, u: int, v: int) -> Pair:
        return (u, v) if self.directed else (min(u, v), max(u, v))

    def has_edge(self, u: int, v: int) -> bool:
        return self.key(u, v) in self._edges

    def weight(self, u: int, v: int, default: Optional[float] = None) -> Optional[float]:
        return self._edges.get(self.key(u, v), default)

    def successors(self, u: int) -> tuple[int, ...]:
        return self._out[u]

    def predecessors(self, u: int) -> tuple[int, ...]:
        return self._in[u]

    def neighbors(self, u: int) -> tuple[int, ...]:
        """Neighbors ignoring direction."""
        return self._und[u]

    def out_degree(self, u: int) -> int:
        return len(self._out[u])

    def in_degree(self, u: int) -> int:
        return len(self._in[u])

    def degree(self, u: int) -> int:
        if self.directed:
            return len(self._out[u]) + len(self._in[u])
        return len(self._out[u])

    def adjacency(self, symmetric: bool = False, weighted: bool = False) -> sp.csr_matrix:
        """Sparse adjacency matrix; ``symmetric`` folds directed edges onto both directions."""
        n = self.node_count
        if not self._edges:
            return sp.csr_matrix((n, n))
        keys = np.array(list(self._edges), dtype=np.int64)
        if weighted and self.weighted:
            vals = np.array([self._edges[tuple(k)] for k in keys.tolist()], dtype=float)
        else:
            vals = np.ones(len(keys))
        rows, cols = keys[:, 0], keys[:, 1]
        if symmetric or not self.directed:
            rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
            vals = np.concatenate([vals, vals])
        a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        if symmetric and self.directed and not weighted:
            a.data[:] = 1.0
        return a

    def without_edges(self, pairs: Iterable[Pair]) -> "Graph":
        """Copy of the graph with the given edges removed (node set unchanged)."""
        drop = {self.key(u, v) for u, v in pairs}
        keep = [(u, v, w) for (u, v), w in sorted(self._edges.items()) if (u, v) not in drop]
        return Graph(self.node_count, keep, directed=self.directed, labels=self.labels)

    def with_weights(self, weights: dict[Pair, float]) -> "Graph":
        edges = [(u, v, weights[(u, v)]) for u, v in sorted(self._edges)]
        return Graph(self.node_count, edges, directed=self.directed, labels=self.labels)


def load_edge_list(
    source: TextIO | str,
    directed: bool = False,
    weighted: bool = False,
    delimiter: Optional[str] = None,
    extra_columns: bool = False,
) -> Graph:
    """Parse a raw ``src dst [weight]`` edge list.

    Node identifiers are re-indexed densely in order of first appearance.
    Duplicate edges collapse to their last occurrence. ``extra_columns``
    tolerates trailing columns (e.g. the timestamp in the Bitcoin CSVs).
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    index: dict[str, int] = {}
    labels: list[str] = []
    edges: dict[Pair, Optional[float]] = {}
    ncols = 3 if weighted else 2
    for line_no, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(delimiter)]
        if len(parts) < ncols:
            raise GraphFormatError(f"expected {ncols} columns, got {len(parts)}", line_no)
        if len(parts) > ncols and not extra_columns:
            if not weighted and len(parts) == 3:
                raise GraphFormatError("weight column present but weighted=False", line_no)
            raise GraphFormatError(f"expected {ncols} columns, got {len(parts)}", line_no)
        a, b = parts[0], parts[1]
        if not a or not b:
            raise GraphFormatError("empty node identifier", line_no)
        if a == b:
            raise GraphFormatError(f"self-loop on node {a!r}", line_no)
        w = None
        if weighted:
            try:
                w = float(parts[2])
            except ValueError:
                raise GraphFormatError(f"bad weight {parts[2]!r}", line_no) from None
            if not math.isfinite(w):
                raise GraphFormatError(f"non-finite weight {parts[2]!r}", line_no)
        ids = []
        for name in (a, b):
            if name not in index:
                index[name] = len(labels)
                labels.append(name)
            ids.append(index[name])
        u, v = ids
        key = (u, v) if directed else (min(u, v), max(u, v))
        edges[key] = w  # duplicates: last weight wins
    return Graph(len(labels), [(u, v, w) for (u, v), w in edges.items()], directed=directed, labels=labels)


def write_graph(g: Graph, stream: TextIO) -> None:
    """Write the internal-id edge list with a header carrying node count and flags."""
    stream.write(f"{GRAPH_HEADER} nodes={g.node_count} directed={int(g.directed)} weighted={int(g.weighted)}\n")
    for u, v, w in g.edges():
        if w is None:
            stream.write(f"{u} {v}\n")
        else:
            stream.write(f"{u} {v} {w!r}\n")


def read_graph(stream: TextIO) -> Graph:
    """Inverse of :func:`write_graph`; internal ids are kept verbatim."""
    header = stream.readline()
    if not header.startswith(GRAPH_HEADER):
        raise GraphFormatError("missing leap-graph header", 1)
    fields = dict(tok.split("=", 1) for tok in header[len(GRAPH_HEADER):].split())
    try:
        n = int(fields["nodes"])
        directed = bool(int(fields["directed"]))
        weighted = bool(int(fields["weighted"]))
    except (KeyError, ValueError):
        raise GraphFormatError("malformed leap-graph header", 1) from None
    edges = []
    ncols = 3 if weighted else 2
    for line_no, raw in enumerate(stream, start=2):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != ncols:
            raise GraphFormatError(f"expected {ncols} columns, got {len(parts)}", line_no)
        try:
            edges.append((int(parts[0]), int(parts[1])) + ((float(parts[2]),) if weighted else ()))
        except ValueError as exc:
            raise GraphFormatError(str(exc), line_no) from None
    return Graph(n, edges, directed=directed)


def write_id_map(g: Graph, stream: TextIO) -> None:
    for i, label in enumerate(g.labels):
        stream.write(f"{i} {label}\n")


def read_id_map(stream: TextIO) -> list[str]:
    labels = []
    for line_no, raw in enumerate(stream, start=1):
        parts = raw.split(maxsplit=1)
        if not parts:
            continue
        if len(parts) != 2 or int(parts[0]) != len(labels):
            raise GraphFormatError("id map must list internal ids 0..N-1 in order", line_no)
        labels.append(parts[1].strip())
    return labels


def normalize_weights(g: Graph) -> Graph:
    """Scale weights into [-1, 1] by the maximum absolute weight."""
    if not g.weighted:
        raise ValueError("graph is unweighted")
    if g.edge_count == 0:
        return g
    scale = max(abs(w) for _, _, w in g.edges())
    if scale == 0.0:
        raise ValueError("all edge weights are zero; cannot normalize")
    return g.with_weights({(u, v): w / scale for u, v, w in g.edges()})


@dataclass
class LabeledPairSet:
    pairs: list[Pair]
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.pairs = [(int(u), int(v)) for u, v in self.pairs]
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if len(self.pairs) != len(self.labels):
            raise ValueError("pairs and labels differ in length")
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("duplicate pair in LabeledPairSet")

    def __len__(self) -> int:
        return len(self.pairs)

    def subset(self, idx: Sequence[int]) -> "LabeledPairSet":
        return LabeledPairSet([self.pairs[i] for i in idx], self.labels[list(idx)])

    def write_csv(self, stream: TextIO) -> None:
        stream.write("u,v,label\n")
        for (u, v), y in zip(self.pairs, self.labels):
            stream.write(f"{u},{v},{float(y)!r}\n")

    @classmethod
    def read_csv(cls, stream: TextIO) -> "LabeledPairSet":
        header = stream.readline().strip()
        if header != "u,v,label":
            raise GraphFormatError("expected header 'u,v,label'", 1)
        pairs, labels = [], []
        for line_no, raw in enumerate(stream, start=2):
            if not raw.strip():
                continue
            parts = raw.strip().split(",")
            if len(parts) != 3:
                raise GraphFormatError("expected 3 columns", line_no)
            pairs.append((int(parts[0]), int(parts[1])))
            labels.append(float(parts[2]))
        return cls(pairs, np.array(labels))


@dataclass
class SplitResult:
    train_graph: Graph
    train_set: LabeledPairSet
    test_set: LabeledPairSet
    seed: int


def _available_non_edges(g: Graph, exclude: set[Pair]) -> int:
    n = g.node_count
    total = n * (n - 1) if g.directed else n * (n - 1) // 2
    blocked = sum(1 for u, v in exclude if u != v and 0 <= u < n and 0 <= v < n and not g.has_edge(u, v))
    return total - g.edge_count - blocked


def sample_negative_pairs(g: Graph, count: int, seed: int, exclude: Iterable[Pair] = ()) -> list[Pair]:
    """Uniformly sample ``count`` distinct non-adjacent node pairs.

    Pairs in ``exclude`` are never returned. Undirected pairs come back as
    ``(min, max)``. Rejection sampling is used first; when it stalls (dense
    graphs) the remaining candidates are enumerated exhaustively.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return []
    banned = {g.key(u, v) for u, v in exclude}
    available = _available_non_edges(g, banned)
    if count > available:
        raise ValueError(f"requested {count} negative pairs but only {available} non-edges are available")

    rng = np.random.default_rng(seed)
    n = g.node_count
    chosen: dict[Pair, None] = {}
    attempts, limit = 0, 1000 * count
    while len(chosen) < count and attempts < limit:
        batch = rng.integers(0, n, size=(2 * (count - len(chosen)) + 8, 2))
        for u, v in batch.tolist():
            attempts += 1
            if u == v:
                continue
            key = g.key(u, v)
            if key in g._edges or key in banned or key in chosen:
                continue
            chosen[key] = None
            if len(chosen) == count:
                break
    if len(chosen) < count:
        pool = [
            (u, v)
            for u in range(n)
            for v in (range(n) if g.directed else range(u + 1, n))
            if u != v and (u, v) not in g._edges and (u, v) not in banned and (u, v) not in chosen
        ]
        extra = rng.choice(len(pool), size=count - len(chosen), replace=False)
        for i in sorted(extra.tolist()):
            chosen[pool[i]] = None
    return list(chosen)


def split_edges(
    g: Graph,
    test_fraction: float,
    seed: int,
    task: str = "link_prediction",
) -> SplitResult:
    """Hold out ``round(test_fraction * |E|)`` edges as test positives.

    For link prediction both sets are balanced with negatives drawn from the
    non-edges of the *full* graph; for ``task="wsn"`` the sets hold the true
    edges labelled with their weights.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    if task not in ("link_prediction", "wsn"):
        raise ValueError(f"unknown task {task!r}")
    if task == "wsn" and not g.weighted:
        raise ValueError("wsn split needs a weighted graph")
    edges = g.edge_pairs()
    n_test = int(round(test_fraction * len(edges)))
    if len(edges) - n_test <= 0:
        raise ValueError("split would leave the training graph without edges")

    ss = np.random.SeedSequence(seed)
    perm_seed, train_neg_seed, test_neg_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    perm = np.random.default_rng(perm_seed).permutation(len(edges))
    test_pos = sorted(edges[i] for i in perm[:n_test])
    train_pos = sorted(edges[i] for i in perm[n_test:])
    train_graph = g.without_edges(test_pos)

    if task == "wsn":
        train = LabeledPairSet(train_pos, [g.weight(u, v) for u, v in train_pos])
        test = LabeledPairSet(test_pos, [g.weight(u, v) for u, v in test_pos])
    else:
        train_neg = sample_negative_pairs(g, len(train_pos), train_neg_seed)
        test_neg = sample_negative_pairs(g, len(test_pos), test_neg_seed, exclude=train_neg)
        train = LabeledPairSet(train_pos + train_neg, [1.0] * len(train_pos) + [0.0] * len(train_neg))
        test = LabeledPairSet(test_pos + test_neg, [1.0] * len(test_pos) + [0.0] * len(test_neg))
    return SplitResult(train_graph, train, test, seed)
