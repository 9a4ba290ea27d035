"""Classical edge scores: Adamic-Adar, truncated Katz, PageRank and Reciprocal."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graph import Graph, Pair

METHODS = ("adamic_adar", "katz", "pagerank", "reciprocal")


def adamic_adar(g: Graph, u: int, v: int) -> float:
    """Sum of ``1 / ln(deg(w))`` over common neighbours ``w`` (direction ignored)."""
    common = set(g.neighbors(u)) & set(g.neighbors(v))
    score = 0.0
    for w in sorted(common):
        d = len(g.neighbors(w))
        if d > 1:  # a common neighbour always has degree >= 2
            score += 1.0 / math.log(d)
    return score


def katz(g: Graph, u: int, v: int, beta: float = 0.005, l_max: int = 5) -> float:
    """Truncated Katz index ``sum_{l<=l_max} beta^l * walks_l(u, v)``.

    Walk counts come from repeated sparse products ``x <- A^T x`` starting
    at the indicator of ``u``. The series converges for ``beta`` below the
    reciprocal spectral radius of the adjacency matrix.
    """
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    return float(katz_scores(g, [(u, v)], beta, l_max)[0])


def katz_scores(g: Graph, pairs: Sequence[Pair], beta: float = 0.005, l_max: int = 5, chunk: int = 256) -> np.ndarray:
    if not pairs:
        return np.zeros(0)
    at = g.adjacency().T.tocsr()
    sources = sorted({u for u, _ in pairs})
    rows: dict[int, np.ndarray] = {}
    for start in range(0, len(sources), chunk):
        block = sources[start : start + chunk]
        x = np.zeros((g.node_count, len(block)))
        x[block, range(len(block))] = 1.0
        acc = np.zeros_like(x)
        factor = 1.0
        for _ in range(l_max):
            x = at @ x
            factor *= beta
            acc += factor * x
        for i, u in enumerate(block):
            rows[u] = acc[:, i]
    return np.array([rows[u][v] for u, v in pairs])


class PageRankError(RuntimeError):
    pass


def pagerank(g: Graph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 1000) -> np.ndarray:
    """Power-iteration PageRank; dangling mass is spread uniformly.

    Iterates until the L1 change drops below ``tol``.
    """
    n = g.node_count
    if n == 0:
        return np.zeros(0)
    a = g.adjacency()
    out_deg = np.asarray(a.sum(axis=1)).ravel()
    dangling = out_deg == 0
    inv = np.where(dangling, 0.0, 1.0 / np.where(dangling, 1.0, out_deg))
    transition = (sp.diags(inv) @ a).T.tocsr()
    r = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = damping * (transition @ r + r[dangling].sum() / n) + (1.0 - damping) / n
        nxt /= nxt.sum()
        if np.abs(nxt - r).sum() < tol:
            return nxt
        r = nxt
    raise PageRankError(f"PageRank did not converge within {max_iter} iterations")


def pagerank_difference(scores: np.ndarray, pairs: Sequence[Pair]) -> np.ndarray:
    """Signed weight estimate ``s_u - s_v`` rescaled into [-1, 1] by its max magnitude."""
    if not pairs:
        return np.zeros(0)
    u = np.array([p[0] for p in pairs])
    v = np.array([p[1] for p in pairs])
    diff = scores[u] - scores[v]
    scale = np.abs(diff).max()
    return diff / scale if scale > 0 else diff


def personalized_pagerank_scores(
    g: Graph, pairs: Sequence[Pair], damping: float = 0.85, tol: float = 1e-10, max_iter: int = 1000, chunk: int = 256
) -> np.ndarray:
    """Symmetrised rooted PageRank ``ppr_u(v) + ppr_v(u)`` used as the link-prediction score."""
    if not pairs:
        return np.zeros(0)
    n = g.node_count
    a = g.adjacency(symmetric=True)
    deg = np.asarray(a.sum(axis=1)).ravel()
    isolated = deg == 0
    inv = np.where(isolated, 0.0, 1.0 / np.where(isolated, 1.0, deg))
    transition = (sp.diags(inv) @ a).T.tocsr()
    roots = sorted({x for p in pairs for x in p})
    ppr: dict[int, np.ndarray] = {}
    for start in range(0, len(roots), chunk):
        block = roots[start : start + chunk]
        restart = np.zeros((n, len(block)))
        restart[block, range(len(block))] = 1.0
        r = restart.copy()
        for _ in range(max_iter):
            stuck = r[isolated].sum(axis=0)
            nxt = damping * (transition @ r) + ((1.0 - damping) + damping * stuck) * restart
            done = np.abs(nxt - r).sum(axis=0).max() < tol
            r = nxt
            if done:
                break
        else:
            raise PageRankError(f"rooted PageRank did not converge within {max_iter} iterations")
        for i, root in enumerate(block):
            ppr[root] = r[:, i]
    return np.array([ppr[u][v] + ppr[v][u] for u, v in pairs])


def reciprocal(g: Graph, u: int, v: int) -> float:
    """Weight of the reverse edge ``v -> u`` if present, else 0."""
    w = g.weight(v, u)
    return 0.0 if w is None else float(w)


def score_pairs(g: Graph, pairs: Sequence[Pair], method: str, **kwargs) -> np.ndarray:
    """Score many pairs with one heuristic (``pagerank`` depends on the task: see ``task``)."""
    method = method.lower()
    if method == "adamic_adar":
        return np.array([adamic_adar(g, u, v) for u, v in pairs])
    if method == "katz":
        return katz_scores(g, pairs, kwargs.get("beta", 0.005), kwargs.get("l_max", 5))
    if method == "pagerank":
        if kwargs.get("task", "link_prediction") == "wsn":
            return pagerank_difference(pagerank(g, kwargs.get("damping", 0.85), kwargs.get("tol", 1e-10)), pairs)
        return personalized_pagerank_scores(g, pairs, kwargs.get("damping", 0.85), kwargs.get("tol", 1e-10))
    if method == "reciprocal":
        return np.array([reciprocal(g, u, v) for u, v in pairs])
    raise ValueError(f"unknown method {method!r}; available: {', '.join(METHODS)}")
