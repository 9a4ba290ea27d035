import itertools

import numpy as np
import pytest

from leap.graph import Graph


def brute_force_paths(g: Graph, u: int, v: int, l: int, directed: bool = False) -> set[tuple[int, ...]]:
    """Every simple u->v path with l edges, by trying all ordered choices of l-1 interior nodes."""
    others = [x for x in range(g.node_count) if x not in (u, v)]
    out = set()
    for mid in itertools.permutations(others, l - 1):
        p = (u, *mid, v)
        hop = g.has_edge if directed else (lambda a, b: g.has_edge(a, b) or g.has_edge(b, a))
        if all(hop(a, b) for a, b in zip(p, p[1:])):
            out.add(p)
    return out


def numeric_grad(f, arr: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar f() with respect to arr (perturbed in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        up = f()
        arr[i] = old - h
        down = f()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)) + np.max(np.abs(b))))


@pytest.fixture
def triangle() -> Graph:
    return Graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def toy6() -> Graph:
    """Six nodes, two triangles joined by a bridge plus a chord."""
    return Graph(6, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5), (1, 4)])


def two_clusters(n_per: int = 15, p_in: float = 0.6, p_out: float = 0.03, seed: int = 0) -> Graph:
    rng = np.random.default_rng(seed)
    n = 2 * n_per
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            same = (a < n_per) == (b < n_per)
            if rng.random() < (p_in if same else p_out):
                edges.append((a, b))
    return Graph(n, edges)


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, name: str, ok: bool, detail: str) -> str:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
