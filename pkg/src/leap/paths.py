"""Bounded-length simple path enumeration and sampling between node pairs.

Paths are tuples of node ids ``(u, u_1, ..., v)``; a path of length ``l``
has ``l`` edges and ``l + 1`` nodes. Only simple paths (no repeated node) are
considered, and the direct edge ``u - v`` is never a member of a path set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, TextIO

import numpy as np

from .graph import Graph

Path = tuple[int, ...]


@dataclass(frozen=True)
class AssemblerConfig:
    lengths: tuple[int, ...] = (3, 4)
    cap: Optional[int] = 50
    seed: int = 0
    exclude_direct_edge: bool = True
    respect_direction: bool = False

    def __post_init__(self):
        lengths = tuple(int(l) for l in self.lengths)
        if not lengths:
            raise ValueError("at least one path length is required")
        if any(l < 2 for l in lengths):
            raise ValueError("path lengths must be >= 2 (the direct edge is not a path)")
        if len(set(lengths)) != len(lengths):
            raise ValueError("path lengths must be distinct")
        if self.cap is not None and self.cap < 1:
            raise ValueError("cap must be >= 1")
        object.__setattr__(self, "lengths", lengths)


@dataclass
class PathSet:
    length: int
    paths: list[Path] = field(default_factory=list)
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self) -> Iterator[Path]:
        return iter(self.paths)

    def as_array(self) -> np.ndarray:
        return np.array(self.paths, dtype=np.int64).reshape(len(self.paths), self.length + 1)


def pair_rng(seed: int, u: int, v: int, l: int) -> np.random.Generator:
    """Generator owned by one (pair, length) so results do not depend on call order."""
    return np.random.default_rng([seed & 0xFFFFFFFF, seed >> 32, u, v, l])


class _Walker:
    """Depth-first traversal that counts complete paths at the last hop in bulk.

    The final intermediate node must lie in ``succ(prev) & pred(v)``, so each
    prefix of ``l - 1`` nodes contributes a whole block of paths at once. Counting
    blocks lets us draw a uniform subset without materialising every path.
    """

    def __init__(self, g: Graph, u: int, v: int, l: int, cfg: AssemblerConfig):
        if cfg.respect_direction and g.directed:
            self.succ = g.successors
            pred_v = set(g.predecessors(v))
        else:
            self.succ = g.neighbors
            pred_v = set(g.neighbors(v))
        self.g, self.u, self.v, self.l = g, u, v, l
        self.pred_v = pred_v
        self.exclude_direct = cfg.exclude_direct_edge

    def _first_hop(self) -> tuple[int, ...]:
        hop = self.succ(self.u)
        if self.exclude_direct:
            hop = tuple(x for x in hop if x != self.v)
        return hop

    def blocks(self) -> Iterator[tuple[list[int], list[int]]]:
        """Yield ``(prefix, last_candidates)``; every candidate closes one path."""
        u, v, l = self.u, self.v, self.l
        if l == 2:
            last = sorted(set(self._first_hop()) & self.pred_v - {u, v})
            if last:
                yield [u], last
            return
        prefix = [u]
        on_path = {u, v}
        stack = [iter(self._first_hop())]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                if len(prefix) > 1:
                    on_path.discard(prefix.pop())
                continue
            if nxt in on_path:
                continue
            prefix.append(nxt)
            on_path.add(nxt)
            if len(prefix) == l - 1:
                last = sorted(x for x in set(self.succ(nxt)) & self.pred_v if x not in on_path)
                if last:
                    yield list(prefix), last
                on_path.discard(prefix.pop())
            else:
                stack.append(iter(self.succ(nxt)))


def count_paths(g: Graph, u: int, v: int, l: int, cfg: Optional[AssemblerConfig] = None) -> int:
    cfg = cfg or AssemblerConfig(lengths=(l,), cap=None)
    return sum(len(last) for _, last in _Walker(g, u, v, l, cfg).blocks())


def enumerate_paths(g: Graph, u: int, v: int, l: int, cfg: AssemblerConfig) -> PathSet:
    """All simple ``u -> v`` paths of length ``l``, or a uniform sample of ``cfg.cap`` of them.

    Sampling draws ``cap`` distinct indices into the (deterministic) DFS order
    and then materialises only those paths, so memory stays ``O(cap * l)``.
    """
    if u == v:
        raise ValueError("u and v must differ")
    for x in (u, v):
        if not 0 <= x < g.node_count:
            raise ValueError(f"node {x} out of range")
    if l < 2:
        raise ValueError("path length must be >= 2")
    walker = _Walker(g, u, v, l, cfg)
    total = count_paths(g, u, v, l, cfg)
    if cfg.cap is None or total <= cfg.cap:
        paths = [tuple(prefix) + (x, v) for prefix, last in walker.blocks() for x in last]
        return PathSet(l, paths, truncated=False)

    rng = pair_rng(cfg.seed, u, v, l)
    chosen = np.sort(rng.choice(total, size=cfg.cap, replace=False))
    paths: list[Path] = []
    offset, k = 0, 0
    for prefix, last in walker.blocks():
        end = offset + len(last)
        while k < len(chosen) and chosen[k] < end:
            paths.append(tuple(prefix) + (last[chosen[k] - offset], v))
            k += 1
        if k == len(chosen):
            break
        offset = end
    return PathSet(l, paths, truncated=True)


def assemble(g: Graph, u: int, v: int, cfg: AssemblerConfig) -> dict[int, PathSet]:
    """One PathSet per configured length, in configuration order."""
    return {l: enumerate_paths(g, u, v, l, cfg) for l in cfg.lengths}


def path_weight(g: Graph, path: Path) -> float:
    """Sum of edge weights along ``path``; edges traversed against their direction use the reverse weight."""
    total = 0.0
    for a, b in zip(path, path[1:]):
        w = g.weight(a, b)
        if w is None:
            w = g.weight(b, a, 0.0)
        total += w
    return total


def order_paths(ps: PathSet, g: Graph) -> PathSet:
    """Canonical order: heaviest first on weighted graphs, then lexicographic."""
    if g.weighted:
        ordered = sorted(ps.paths, key=lambda p: (-path_weight(g, p), p))
    else:
        ordered = sorted(ps.paths)
    return PathSet(ps.length, ordered, ps.truncated)


def dump_paths(pathsets: dict[int, PathSet], stream: TextIO) -> None:
    """Debug dump: one ``# length l`` header per group, one path per line."""
    for l, ps in pathsets.items():
        stream.write(f"# length {l} paths={len(ps)} truncated={int(ps.truncated)}\n")
        for p in ps:
            stream.write(" ".join(map(str, p)) + "\n")
