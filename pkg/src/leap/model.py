"""End-to-end LEAP pipeline: path assembly, vectorization, edge learner, training."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .aggregators import Aggregator, VectorizedPathSet, make_aggregator
from .config import ExperimentConfig
from .graph import Graph, LabeledPairSet, Pair
from .paths import AssemblerConfig, PathSet, assemble, order_paths
from .tensor import (
    Adam,
    Tensor,
    affine,
    concat,
    glorot,
    load_arrays,
    loss,
    mul,
    no_grad,
    parameter,
    reshape,
    save_arrays,
    take,
)

log = logging.getLogger(__name__)


class EmbeddingTable:
    """``N x K`` node vectors; row ``i`` is the vector of node ``i``."""

    def __init__(self, matrix: np.ndarray, trainable: bool = True):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")
        self.table = Tensor(matrix, requires_grad=trainable, name="embedding")

    @property
    def trainable(self) -> bool:
        return self.table.requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape

    @classmethod
    def random(cls, n: int, k: int, rng: np.random.Generator) -> "EmbeddingTable":
        return cls(rng.uniform(-0.05, 0.05, size=(n, k)), trainable=True)


def read_node_matrix(path, g: Graph) -> np.ndarray:
    """Read a ``"N K"``-headed file of ``id v1 .. vK`` rows, aligned to ``g``'s node order.

    Ids are matched against the graph's original node labels. Rows for ids
    outside the graph are ignored; a graph node without a row is an error.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'N K'")
        width = int(header[1])
        rows: dict[str, np.ndarray] = {}
        for line_no, raw in enumerate(fh, start=2):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != width + 1:
                raise ValueError(f"{path}: line {line_no}: expected {width} values, got {len(parts) - 1}")
            rows[parts[0]] = np.array([float(x) for x in parts[1:]])
    index = {label: i for i, label in enumerate(g.labels)}
    out = np.empty((g.node_count, width))
    missing = [label for label in g.labels if label not in rows]
    if missing:
        raise ValueError(f"{path}: no vector for node id {missing[0]!r} ({len(missing)} missing)")
    for label, i in index.items():
        out[i] = rows[label]
    return out


def write_node_matrix(path, matrix: np.ndarray, g: Graph) -> None:
    with open(path, "w") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for label, row in zip(g.labels, matrix):
            fh.write(label + " " + " ".join(repr(float(x)) for x in row) + "\n")


def load_pretrained_embeddings(path, g: Graph) -> EmbeddingTable:
    """Frozen table from a pretrained embedding file (e.g. node2vec output)."""
    return EmbeddingTable(read_node_matrix(path, g), trainable=False)


def edge_feature_width(g: Graph, cfg: ExperimentConfig) -> int:
    if cfg.aggregator != "edgeconv" or not cfg.edge_features or not g.weighted:
        return 0
    return 2 if g.directed else 1


def path_edge_features(g: Graph, paths: np.ndarray, width: int) -> np.ndarray:
    """Per-edge features along each path: the weight, plus the reverse weight on directed graphs."""
    n, l1 = paths.shape
    out = np.zeros((n, l1 - 1, width))
    for i, p in enumerate(paths.tolist()):
        for t, (a, b) in enumerate(zip(p, p[1:])):
            if width == 1:
                out[i, t, 0] = g.weight(a, b, 0.0)
            else:
                out[i, t, 0] = g.weight(a, b, 0.0)
                out[i, t, 1] = g.weight(b, a, 0.0)
    return out


@dataclass
class PairPaths:
    """Ordered path arrays per length for one pair, ready for batching."""

    u: int
    v: int
    paths: dict[int, np.ndarray]
    edge_features: dict[int, np.ndarray]


def prepare_pair(g: Graph, u: int, v: int, cfg: ExperimentConfig, edge_width: int = 0) -> PairPaths:
    acfg = assembler_config(cfg)
    sets = assemble(g, u, v, acfg)
    return pair_paths_from_sets(g, u, v, sets, edge_width)


def pair_paths_from_sets(g: Graph, u: int, v: int, sets: dict[int, PathSet], edge_width: int = 0) -> PairPaths:
    paths, feats = {}, {}
    for l, ps in sets.items():
        arr = order_paths(ps, g).as_array()
        paths[l] = arr
        if edge_width:
            feats[l] = path_edge_features(g, arr, edge_width)
    return PairPaths(u, v, paths, feats)


def assembler_config(cfg: ExperimentConfig) -> AssemblerConfig:
    return AssemblerConfig(
        lengths=cfg.lengths,
        cap=cfg.cap,
        seed=cfg.seed,
        exclude_direct_edge=True,
        respect_direction=cfg.respect_direction,
    )


def prepare_pairs(g: Graph, pairs: Sequence[Pair], cfg: ExperimentConfig, edge_width: int = 0) -> list[PairPaths]:
    return [prepare_pair(g, u, v, cfg, edge_width) for u, v in pairs]


@dataclass
class Batch:
    u: np.ndarray
    v: np.ndarray
    idx: dict[int, np.ndarray]  # (B, P, l+1)
    mask: dict[int, np.ndarray]  # (B, P)
    edge_features: dict[int, Optional[np.ndarray]]

    def __len__(self) -> int:
        return len(self.u)


def collate(items: Sequence[PairPaths], lengths: Sequence[int], edge_width: int = 0) -> Batch:
    B = len(items)
    idx, mask, feats = {}, {}, {}
    for l in lengths:
        P = max(1, max(len(it.paths[l]) for it in items))
        ids = np.zeros((B, P, l + 1), dtype=np.int64)
        m = np.zeros((B, P), dtype=bool)
        ef = np.zeros((B, P, l, edge_width)) if edge_width else None
        for b, it in enumerate(items):
            n = len(it.paths[l])
            if n:
                ids[b, :n] = it.paths[l]
                m[b, :n] = True
                if edge_width:
                    ef[b, :n] = it.edge_features[l]
        idx[l], mask[l], feats[l] = ids, m, ef
    u = np.array([it.u for it in items], dtype=np.int64)
    v = np.array([it.v for it in items], dtype=np.int64)
    return Batch(u, v, idx, mask, feats)


class LeapModel:
    """Embeddings + one aggregator per path length + feed-forward edge learner."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        node_count: int,
        rng: Optional[np.random.Generator] = None,
        embeddings: Optional[EmbeddingTable] = None,
        node_features: Optional[np.ndarray] = None,
        edge_width: int = 0,
    ):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.node_count = node_count
        self.edge_width = edge_width
        if embeddings is None:
            embeddings = EmbeddingTable.random(node_count, cfg.embedding_dim, rng)
        if embeddings.shape[0] != node_count:
            raise ValueError(f"embedding table has {embeddings.shape[0]} rows for {node_count} nodes")
        self.embeddings = embeddings
        if node_features is not None:
            node_features = np.asarray(node_features, dtype=np.float64)
            if node_features.shape[0] != node_count:
                raise ValueError("node feature matrix must have one row per node")
        self.node_features = node_features
        self.node_width = embeddings.shape[1] + (0 if node_features is None else node_features.shape[1])

        self.aggregators: dict[int, Aggregator] = {
            l: make_aggregator(
                cfg.aggregator,
                l,
                self.node_width,
                rng,
                dense_hidden=cfg.dense_hidden,
                dense_activation=cfg.dense_activation,
                inner_hidden=cfg.inner_hidden,
                outer_hidden=cfg.outer_hidden,
                conv_filters=cfg.conv_filters,
                conv_activation=cfg.conv_activation,
                edge_width=edge_width,
            )
            for l in cfg.lengths
        }
        width = self.vector_width
        self.hidden: list[tuple[Tensor, Tensor]] = []
        for c in range(cfg.el_layers):
            self.hidden.append(
                (parameter(glorot(rng, width, cfg.el_hidden, (cfg.el_hidden, width))), parameter(np.zeros(cfg.el_hidden)))
            )
            width = cfg.el_hidden
        self.W_out = parameter(glorot(rng, width, 1, (1, width)))
        self.b_out = parameter(np.zeros(1))

    @property
    def vector_width(self) -> int:
        """Width of the combined path vector fed to the edge learner."""
        return 2 * self.node_width + sum(a.output_width for a in self.aggregators.values())

    def named_parameters(self) -> dict[str, Tensor]:
        named = {"embedding": self.embeddings.table}
        for l, agg in self.aggregators.items():
            for k, t in agg.parameters().items():
                named[f"agg.l{l}.{k}"] = t
        for c, (W, b) in enumerate(self.hidden):
            named[f"el.{c}.W"] = W
            named[f"el.{c}.b"] = b
        named["el.out.W"] = self.W_out
        named["el.out.b"] = self.b_out
        return named

    def trainable_parameters(self) -> list[Tensor]:
        return [t for t in self.named_parameters().values() if t.requires_grad]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.named_parameters().items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        named = self.named_parameters()
        missing = set(named) - set(arrays)
        if missing:
            raise ValueError(f"state is missing parameter {sorted(missing)[0]!r}")
        for k, t in named.items():
            if arrays[k].shape != t.shape:
                raise ValueError(f"parameter {k!r} has shape {arrays[k].shape}, expected {t.shape}")
            t.data[...] = arrays[k]

    # forward pieces
    def node_vectors(self, idx: np.ndarray) -> Tensor:
        emb = take(self.embeddings.table, idx)
        if self.node_features is None:
            return emb
        return concat([emb, Tensor(self.node_features[idx])], axis=-1)

    def vectorize(self, batch: Batch) -> Tensor:
        """Combined path vector ``[u | v | h^l1 | ... | h^lk]`` for each pair in the batch."""
        parts = [self.node_vectors(batch.u), self.node_vectors(batch.v)]
        for l, agg in self.aggregators.items():
            if l not in batch.idx:
                raise ValueError(f"batch has no paths for configured length {l}")
            m = batch.mask[l]
            nodes = mul(self.node_vectors(batch.idx[l]), m[:, :, None, None].astype(np.float64))
            parts.append(agg(VectorizedPathSet(nodes, m, batch.edge_features[l])))
        return concat(parts, axis=-1)

    def edge_learn(self, h: Tensor) -> Tensor:
        for W, b in self.hidden:
            h = affine(h, W, b, self.cfg.el_activation)
        out = affine(h, self.W_out, self.b_out, self.cfg.output_activation)
        return reshape(out, out.shape[:-1])

    def forward_batch(self, batch: Batch) -> Tensor:
        return self.edge_learn(self.vectorize(batch))

    def path_vectorize(self, u: int, v: int, pathsets: dict[int, PathSet], g: Optional[Graph] = None) -> Tensor:
        missing = [l for l in pathsets if l not in self.aggregators]
        if missing:
            raise KeyError(f"no aggregator for path length {missing[0]}")
        if g is not None:
            item = pair_paths_from_sets(g, u, v, pathsets, self.edge_width)
        else:
            if self.edge_width:
                raise ValueError("edge features need the graph")
            item = PairPaths(u, v, {l: ps.as_array() for l, ps in pathsets.items()}, {})
        h = self.vectorize(collate([item], self.cfg.lengths, self.edge_width))
        return reshape(h, (h.shape[-1],))

    def forward(self, g: Graph, u: int, v: int) -> float:
        with no_grad():
            batch = collate([prepare_pair(g, u, v, self.cfg, self.edge_width)], self.cfg.lengths, self.edge_width)
            return float(self.forward_batch(batch).data[0])

    @classmethod
    def create(cls, cfg: ExperimentConfig, g: Graph, rng: Optional[np.random.Generator] = None) -> "LeapModel":
        """Build a fresh model for ``g``, loading pretrained embeddings / node features named in ``cfg``."""
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        emb = None
        if cfg.pretrained_embeddings:
            emb = EmbeddingTable(read_node_matrix(cfg.pretrained_embeddings, g), trainable=not cfg.freeze_embeddings)
        feats = read_node_matrix(cfg.node_features, g) if cfg.node_features else None
        return cls(cfg, g.node_count, rng, emb, feats, edge_feature_width(g, cfg))


def path_vectorize(u: int, v: int, pathsets: dict[int, PathSet], model: LeapModel, g: Optional[Graph] = None) -> Tensor:
    return model.path_vectorize(u, v, pathsets, g)


def edge_learn(h_pv: Tensor, model: LeapModel) -> Tensor:
    return model.edge_learn(h_pv)


def forward(g: Graph, u: int, v: int, model: LeapModel) -> float:
    return model.forward(g, u, v)


def _batches(n: int, size: int, order: Optional[np.ndarray] = None) -> Iterable[np.ndarray]:
    order = np.arange(n) if order is None else order
    for start in range(0, n, size):
        yield order[start : start + size]


def predict_prepared(model: LeapModel, items: Sequence[PairPaths], batch_size: int = 256) -> np.ndarray:
    out = np.empty(len(items))
    with no_grad():
        for sel in _batches(len(items), batch_size):
            batch = collate([items[i] for i in sel], model.cfg.lengths, model.edge_width)
            out[sel] = model.forward_batch(batch).data
    return out


def predict_batch(g: Graph, pairs: Sequence[Pair], model: LeapModel, batch_size: int = 256) -> np.ndarray:
    """Scores for ``pairs`` in input order."""
    if len(pairs) == 0:
        return np.zeros(0)
    items = prepare_pairs(g, pairs, model.cfg, model.edge_width)
    return predict_prepared(model, items, batch_size)


def _dataset_loss(model: LeapModel, items: Sequence[PairPaths], labels: np.ndarray) -> float:
    if len(items) == 0:
        return float("nan")
    preds = predict_prepared(model, items)
    with no_grad():
        return float(loss(Tensor(preds), labels, model.cfg.loss_kind).data)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


def holdout(train_set: LabeledPairSet, fraction: float, seed: int) -> tuple[LabeledPairSet, LabeledPairSet]:
    """Split off ``round(fraction * n)`` pairs as a validation set."""
    n = len(train_set)
    n_val = int(round(fraction * n))
    if n_val == 0 or n_val >= n:
        return train_set, LabeledPairSet([], [])
    perm = np.random.default_rng(seed).permutation(n)
    return train_set.subset(sorted(perm[n_val:].tolist())), train_set.subset(sorted(perm[:n_val].tolist()))


def train(
    g_train: Graph,
    train_set: LabeledPairSet,
    val_set: Optional[LabeledPairSet],
    cfg: ExperimentConfig,
    model: Optional[LeapModel] = None,
) -> tuple[LeapModel, list[EpochRecord]]:
    """Mini-batch Adam training with early stopping on validation loss.

    When ``val_set`` is None a ``cfg.val_fraction`` share of ``train_set`` is
    held out. The returned model carries the parameters of the best epoch.
    """
    labels = train_set.labels
    if cfg.task == "link_prediction" and np.any((labels != 0.0) & (labels != 1.0)):
        raise ValueError("link prediction labels must be 0/1")
    if cfg.task == "wsn" and np.any(np.abs(labels) > 1.0):
        raise ValueError("wsn labels must lie in [-1, 1]; normalize the graph weights first")

    seq = np.random.SeedSequence(cfg.seed)
    init_ss, val_ss, shuffle_ss = seq.spawn(3)
    if val_set is None:
        train_set, val_set = holdout(train_set, cfg.val_fraction, int(val_ss.generate_state(1)[0]))
    if model is None:
        model = LeapModel.create(cfg, g_train, np.random.default_rng(init_ss))

    t0 = time.perf_counter()
    train_items = prepare_pairs(g_train, train_set.pairs, cfg, model.edge_width)
    val_items = prepare_pairs(g_train, val_set.pairs, cfg, model.edge_width)
    log.info("assembled paths for %d train / %d val pairs in %.1fs", len(train_items), len(val_items), time.perf_counter() - t0)

    params = model.trainable_parameters()
    opt = Adam(params, lr=cfg.lr)
    rng = np.random.default_rng(shuffle_ss)
    history: list[EpochRecord] = []
    best_loss, best_state, stale = np.inf, None, 0

    for epoch in range(1, cfg.max_epochs + 1):
        start = time.perf_counter()
        total = 0.0
        for b, sel in enumerate(_batches(len(train_items), cfg.batch_size, rng.permutation(len(train_items)))):
            batch = collate([train_items[i] for i in sel], cfg.lengths, model.edge_width)
            opt.zero_grad()
            try:
                pred = model.forward_batch(batch)
                value = loss(pred, train_set.labels[sel], cfg.loss_kind)
            except FloatingPointError as exc:
                raise FloatingPointError(f"non-finite value at epoch {epoch}, batch {b}: {exc}") from exc
            value.backward()
            opt.step()
            total += float(value.data) * len(sel)
        train_loss = total / max(len(train_items), 1)
        val_loss = _dataset_loss(model, val_items, val_set.labels) if val_items else train_loss
        if not np.isfinite(train_loss) or not np.isfinite(val_loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}: train={train_loss} val={val_loss}")
        history.append(EpochRecord(epoch, train_loss, val_loss, time.perf_counter() - start))
        log.info("epoch %d train_loss=%.5f val_loss=%.5f (%.1fs)", epoch, train_loss, val_loss, history[-1].seconds)
        if val_loss < best_loss:
            best_loss, best_state, stale = val_loss, model.state_arrays(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("early stop at epoch %d (best val_loss=%.5f)", epoch, best_loss)
                break
    if best_state is not None:
        model.load_state(best_state)
    return model, history


MODEL_KIND = "leap-model"


def save_model(model: LeapModel, path) -> None:
    arrays = model.state_arrays()
    if model.node_features is not None:
        arrays["node_features"] = model.node_features
    meta = {
        "kind": MODEL_KIND,
        "config": model.cfg.to_dict(),
        "node_count": model.node_count,
        "edge_width": model.edge_width,
        "embedding_trainable": model.embeddings.trainable,
    }
    save_arrays(path, arrays, meta)


def load_model(path) -> LeapModel:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != MODEL_KIND:
        raise ValueError(f"{path} does not hold a LEAP model")
    cfg = ExperimentConfig.from_dict(meta["config"])
    emb = EmbeddingTable(arrays["embedding"], trainable=meta["embedding_trainable"])
    model = LeapModel(cfg, meta["node_count"], np.random.default_rng(0), emb, arrays.get("node_features"), meta["edge_width"])
    model.load_state(arrays)
    return model
