"""Path-set aggregators: AvgPool, DenseMax, SeqOfSeq and EdgeConv.

Each aggregator owns the weights for exactly one path length and maps a
(batched) vectorized path set to one vector per node pair. Path sets are
padded to a common count; padded paths sit *after* the real ones and are
excluded by a boolean mask, so the order-sensitive LSTMs never see them
before a real path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import (
    LSTMParams,
    Tensor,
    affine,
    as_tensor,
    conv1d_k2,
    glorot,
    lstm_sequence,
    masked_pool,
    mul,
    parameter,
    reshape,
)

KINDS = ("avgpool", "densemax", "seqofseq", "edgeconv")


@dataclass
class VectorizedPathSet:
    """Node vectors of shape ``(B, P, l + 1, K_eff)`` plus a ``(B, P)`` mask.

    ``edge_features`` (optional) has shape ``(B, P, l, E)``.
    """

    nodes: Tensor
    mask: np.ndarray
    edge_features: Optional[np.ndarray] = None

    def __post_init__(self):
        self.nodes = as_tensor(self.nodes)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.nodes.ndim != 4:
            raise ValueError("nodes must be (batch, paths, length+1, width)")
        if self.mask.shape != self.nodes.shape[:2]:
            raise ValueError(f"mask shape {self.mask.shape} does not match {self.nodes.shape[:2]}")

    @property
    def length(self) -> int:
        return self.nodes.shape[2] - 1

    @classmethod
    def single(cls, paths: np.ndarray, edge_features: Optional[np.ndarray] = None) -> "VectorizedPathSet":
        """Wrap one unbatched ``(n_paths, l + 1, K)`` array."""
        arr = np.asarray(paths, dtype=np.float64)
        ef = None if edge_features is None else np.asarray(edge_features, dtype=np.float64)[None]
        return cls(Tensor(arr[None]), np.ones((1, arr.shape[0]), dtype=bool), ef)


class Aggregator:
    kind = ""

    def __init__(self, length: int, node_width: int):
        if length < 2:
            raise ValueError("aggregators are defined for path lengths >= 2")
        self.length = length
        self.node_width = node_width

    @property
    def output_width(self) -> int:
        raise NotImplementedError

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def __call__(self, ps: VectorizedPathSet) -> Tensor:
        if ps.length != self.length:
            raise ValueError(f"{self.kind} for length {self.length} got paths of length {ps.length}")
        if ps.nodes.shape[-1] != self.node_width:
            raise ValueError(f"node width {ps.nodes.shape[-1]} != expected {self.node_width}")
        return self.forward(ps)

    def forward(self, ps: VectorizedPathSet) -> Tensor:
        raise NotImplementedError

    def _flatten(self, ps: VectorizedPathSet) -> Tensor:
        B, P = ps.mask.shape
        return reshape(ps.nodes, (B, P, (self.length + 1) * self.node_width))


class AvgPool(Aggregator):
    """Mean of the flattened path vectors; no trainable weights."""

    kind = "avgpool"

    @property
    def output_width(self) -> int:
        return (self.length + 1) * self.node_width

    def forward(self, ps):
        return masked_pool(self._flatten(ps), 1, "avg", ps.mask)


class DenseMax(Aggregator):
    kind = "densemax"

    def __init__(self, length, node_width, hidden=64, activation="relu", rng=None):
        super().__init__(length, node_width)
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = (length + 1) * node_width
        self.activation = activation
        self.W = parameter(glorot(rng, fan_in, hidden, (hidden, fan_in)), "W")
        self.b = parameter(np.zeros(hidden), "b")

    @property
    def output_width(self) -> int:
        return self.W.shape[0]

    def parameters(self):
        return {"W": self.W, "b": self.b}

    def forward(self, ps):
        dense = affine(self._flatten(ps), self.W, self.b, self.activation)
        return masked_pool(dense, 1, "max", ps.mask)


class SeqOfSeq(Aggregator):
    """Inner LSTM along each path, max over nodes; outer LSTM across paths, max over paths."""

    kind = "seqofseq"

    def __init__(self, length, node_width, inner_hidden=32, outer_hidden=32, rng=None):
        super().__init__(length, node_width)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.inner = LSTMParams.init(node_width, inner_hidden, rng, "inner")
        self.outer = LSTMParams.init(inner_hidden, outer_hidden, rng, "outer")

    @property
    def output_width(self) -> int:
        return self.outer.hidden

    def parameters(self):
        return _lstm_named("inner", self.inner) | _lstm_named("outer", self.outer)

    def forward(self, ps):
        inner = lstm_sequence(ps.nodes, self.inner)  # (B, P, l+1, Hi)
        path_vecs = masked_pool(inner, 2, "max")  # (B, P, Hi)
        outer = lstm_sequence(path_vecs, self.outer)
        return masked_pool(outer, 1, "max", ps.mask)


class EdgeConv(Aggregator):
    """Width-2 convolution over consecutive nodes, max over edges, then LSTM + max over paths."""

    kind = "edgeconv"

    def __init__(self, length, node_width, filters=32, hidden=32, activation="relu", edge_width=0, rng=None):
        super().__init__(length, node_width)
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = 2 * node_width + edge_width
        self.edge_width = edge_width
        self.activation = activation
        self.K = parameter(glorot(rng, fan_in, filters, (filters, fan_in)), "K")
        self.b = parameter(np.zeros(filters), "b")
        self.lstm = LSTMParams.init(filters, hidden, rng, "lstm")

    @property
    def output_width(self) -> int:
        return self.lstm.hidden

    def parameters(self):
        return {"K": self.K, "b": self.b} | _lstm_named("lstm", self.lstm)

    def forward(self, ps):
        ef = None
        if self.edge_width:
            if ps.edge_features is None or ps.edge_features.shape[-1] != self.edge_width:
                raise ValueError(f"edgeconv expects edge features of width {self.edge_width}")
            ef = Tensor(ps.edge_features)
        conv = conv1d_k2(ps.nodes, self.K, self.b, self.activation, ef)  # (B, P, l, f)
        path_vecs = masked_pool(conv, 2, "max")
        seq = lstm_sequence(path_vecs, self.lstm)
        return masked_pool(seq, 1, "max", ps.mask)


def _lstm_named(prefix: str, p: LSTMParams) -> dict[str, Tensor]:
    return {f"{prefix}.Wx": p.Wx, f"{prefix}.Wh": p.Wh, f"{prefix}.b": p.b}


def make_aggregator(
    kind: str,
    length: int,
    node_width: int,
    rng: np.random.Generator,
    dense_hidden: int = 64,
    dense_activation: str = "relu",
    inner_hidden: int = 32,
    outer_hidden: int = 32,
    conv_filters: int = 32,
    conv_activation: str = "relu",
    edge_width: int = 0,
) -> Aggregator:
    kind = kind.lower()
    if kind == "avgpool":
        return AvgPool(length, node_width)
    if kind == "densemax":
        return DenseMax(length, node_width, dense_hidden, dense_activation, rng)
    if kind == "seqofseq":
        return SeqOfSeq(length, node_width, inner_hidden, outer_hidden, rng)
    if kind == "edgeconv":
        return EdgeConv(length, node_width, conv_filters, outer_hidden, conv_activation, edge_width, rng)
    raise ValueError(f"unknown aggregator {kind!r}; expected one of {KINDS}")


def zero_padded(ps: VectorizedPathSet) -> Tensor:
    """Node tensor with padded paths forced to zero."""
    return mul(ps.nodes, ps.mask[:, :, None, None].astype(np.float64))
