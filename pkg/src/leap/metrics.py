"""Evaluation metrics and scored-pair export."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

import numpy as np
from scipy.stats import rankdata

from .graph import Pair


def auc(scores: Sequence[float], labels: Sequence[float]) -> float:
    """ROC AUC via the Mann-Whitney rank statistic; tied scores count one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = y == 1.0
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both positive and negative labels")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("auc labels must be 0 or 1")
    ranks = rankdata(s)  # average ranks for ties
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _pair_arrays(pred, true) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(true, dtype=float)
    if p.shape != t.shape:
        raise ValueError("prediction and truth differ in length")
    if p.size < 2:
        raise ValueError("need at least two values")
    return p, t


def rmse(pred, true) -> float:
    p, t = _pair_arrays(pred, true)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def pcc(pred, true) -> float:
    """Pearson correlation; undefined (raises) when either vector is constant."""
    p, t = _pair_arrays(pred, true)
    dp, dt = p - p.mean(), t - t.mean()
    sp, st = np.sqrt(np.sum(dp * dp)), np.sqrt(np.sum(dt * dt))
    if sp == 0.0 or st == 0.0:
        raise ValueError("pcc is undefined for a constant vector")
    return float(np.clip(np.sum(dp * dt) / (sp * st), -1.0, 1.0))


@dataclass
class ScoredPairs:
    pairs: list[Pair]
    scores: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if len(self.scores) != len(self.pairs):
            raise ValueError("one score per pair is required")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=float)
            if len(self.labels) != len(self.pairs):
                raise ValueError("one label per pair is required")

    def write_csv(self, stream: TextIO) -> None:
        stream.write("u,v,score,label\n")
        labels = self.labels if self.labels is not None else [None] * len(self.pairs)
        for (u, v), s, y in zip(self.pairs, self.scores, labels):
            stream.write(f"{u},{v},{float(s)!r},{'' if y is None else repr(float(y))}\n")


def evaluate(task: str, scores, labels) -> dict[str, float]:
    """Task metrics: ``auc`` for link prediction, ``rmse`` and ``pcc`` for WSN."""
    if task == "link_prediction":
        return {"auc": auc(scores, labels)}
    return {"rmse": rmse(scores, labels), "pcc": pcc(scores, labels)}
