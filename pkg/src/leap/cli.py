"""Command-line experiment runner.

Subcommands::

    leap split     write train graph / train pairs / test pairs for one seed
    leap train     split, train and evaluate for every seed; checkpoint + report
    leap eval      score a pairs file with a saved model
    leap baseline  score test pairs with a classical heuristic
    leap sweep     WSN: train/eval LEAP and baselines over a range of test fractions

Every run is determined by the configuration plus the seed; the report and
metrics files are append-only.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import baselines
from .config import TASK_ALIASES, ConfigError, ExperimentConfig, parse_config
from .datasets import DatasetNotFound, dataset_path, load_graph_source
from .graph import Graph, LabeledPairSet, SplitResult, read_graph, split_edges, write_graph, write_id_map
from .metrics import ScoredPairs, evaluate
from .model import load_model, predict_batch, save_model, train

log = logging.getLogger("leap")

METRICS_FIELDS = ["config_hash", "input_hash", "dataset", "task", "method", "fraction", "seed", "metric", "value"]
PLOT_FIELDS = ["x", "method", "metric", "value"]


class CliError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def input_hash(cfg: ExperimentConfig) -> str:
    """Hash of the configuration plus the bytes of every input file it names."""
    h = hashlib.sha256(cfg.hash().encode())
    files = []
    if cfg.dataset:
        p = Path(cfg.dataset)
        files.append(p if p.is_file() else dataset_path(cfg.dataset))
    files += [Path(f) for f in (cfg.pretrained_embeddings, cfg.node_features) if f]
    for f in files:
        h.update(_sha256_file(f).encode())
    return h.hexdigest()[:16]


def _append_csv(path: Path, fields: Sequence[str], rows: Sequence[dict]) -> None:
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        if new:
            w.writeheader()
        w.writerows(rows)


def _load_graph(cfg: ExperimentConfig) -> Graph:
    if not cfg.dataset:
        raise CliError("no dataset given (use --dataset or set dataset in [experiment])")
    try:
        return load_graph_source(cfg.dataset, normalize=cfg.normalize)
    except DatasetNotFound as exc:
        raise CliError(str(exc)) from None
    except KeyError as exc:
        raise CliError(exc.args[0]) from None


def _split(g: Graph, cfg: ExperimentConfig, seed: int, fraction: Optional[float] = None) -> SplitResult:
    task = "wsn" if cfg.task == "wsn" else "link_prediction"
    return split_edges(g, cfg.test_fraction if fraction is None else fraction, seed, task=task)


def write_split(split: SplitResult, out: Path, g: Optional[Graph] = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "train_graph.txt", "w") as fh:
        write_graph(split.train_graph, fh)
    with open(out / "train_pairs.csv", "w") as fh:
        split.train_set.write_csv(fh)
    with open(out / "test_pairs.csv", "w") as fh:
        split.test_set.write_csv(fh)
    if g is not None and g.labels is not None:
        with open(out / "id_map.txt", "w") as fh:
            write_id_map(g, fh)


def read_split(out: Path) -> SplitResult:
    try:
        with open(out / "train_graph.txt") as fh:
            g = read_graph(fh)
        with open(out / "train_pairs.csv") as fh:
            train_set = LabeledPairSet.read_csv(fh)
        with open(out / "test_pairs.csv") as fh:
            test_set = LabeledPairSet.read_csv(fh)
    except FileNotFoundError as exc:
        raise CliError(f"incomplete split directory {out}: {exc.filename} missing") from None
    return SplitResult(g, train_set, test_set, seed=-1)


def _summary(per_seed: list[dict[str, float]]) -> dict[str, tuple[float, float]]:
    out = {}
    for k in per_seed[0]:
        vals = np.array([m[k] for m in per_seed])
        out[k] = (float(vals.mean()), float(vals.std()))
    return out


@dataclass
class RunReport:
    """One experiment: configuration echo, per-seed metrics and their spread."""

    title: str
    cfg: ExperimentConfig
    input_hash: str
    per_seed: dict[int, dict[str, float]] = field(default_factory=dict)
    seconds: float = 0.0

    def render(self) -> str:
        lines = [f"=== {self.title}", f"config_hash = {self.cfg.hash()}", f"input_hash = {self.input_hash}", "--- config"]
        lines += [l for l in self.cfg.to_ini().splitlines() if l]
        lines.append("--- metrics")
        for seed, m in self.per_seed.items():
            lines.append(f"seed {seed}: " + "  ".join(f"{k}={v:.6f}" for k, v in m.items()))
        if self.per_seed:
            for k, (mean, std) in _summary(list(self.per_seed.values())).items():
                lines.append(f"{k}: mean={mean:.6f} std={std:.6f}")
        lines.append(f"wall_clock_seconds = {self.seconds:.2f}")
        return "\n".join(lines) + "\n\n"

    def append_to(self, path: Path) -> None:
        with open(path, "a") as fh:
            fh.write(self.render())


def _metric_rows(cfg, ihash, method, fraction, seed, metrics) -> list[dict]:
    return [
        dict(
            config_hash=cfg.hash(),
            input_hash=ihash,
            dataset=cfg.dataset,
            task=cfg.task,
            method=method,
            fraction=fraction,
            seed=seed,
            metric=k,
            value=repr(v),
        )
        for k, v in metrics.items()
    ]


def _write_history(path: Path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), f"{r.seconds:.3f}"])


def _write_scores(path: Path, pairs, scores, labels) -> None:
    with open(path, "w") as fh:
        ScoredPairs(list(pairs), scores, labels).write_csv(fh)


# ---------------------------------------------------------------- commands


def run_leap_seed(g: Graph, cfg: ExperimentConfig, seed: int, out: Path, fraction: Optional[float] = None):
    """Split, train and evaluate one seed; writes checkpoint, history and scores into ``out``."""
    cfg = cfg.replace(seed=seed)
    split = _split(g, cfg, seed, fraction)
    out.mkdir(parents=True, exist_ok=True)
    model, history = train(split.train_graph, split.train_set, None, cfg)
    scores = predict_batch(split.train_graph, split.test_set.pairs, model)
    save_model(model, out / "model.npz")
    _write_history(out / "history.csv", history)
    _write_scores(out / "scores.csv", split.test_set.pairs, scores, split.test_set.labels)
    return evaluate(cfg.task, scores, split.test_set.labels), split


def cmd_split(cfg: ExperimentConfig, seeds: Sequence[int], out: Path) -> None:
    g = _load_graph(cfg)
    for seed in seeds:
        split = _split(g, cfg, seed)
        target = out / f"seed{seed}" if len(seeds) > 1 else out
        write_split(split, target, g)
        n_pos = int(np.sum(split.test_set.labels == 1)) if cfg.task == "link_prediction" else len(split.test_set)
        print(f"seed {seed}: train_pairs={len(split.train_set)} test_pairs={len(split.test_set)} test_positives={n_pos} -> {target}")


def cmd_train(cfg: ExperimentConfig, seeds: Sequence[int], out: Path) -> RunReport:
    g = _load_graph(cfg)
    out.mkdir(parents=True, exist_ok=True)
    ihash = input_hash(cfg)
    report = RunReport(f"train {cfg.aggregator} on {cfg.dataset} ({cfg.task})", cfg, ihash)
    t0 = time.perf_counter()
    rows = []
    for seed in seeds:
        metrics, _ = run_leap_seed(g, cfg, seed, out / f"seed{seed}")
        report.per_seed[seed] = metrics
        rows += _metric_rows(cfg, ihash, f"leap-{cfg.aggregator}", cfg.test_fraction, seed, metrics)
        print(f"seed {seed}: " + "  ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    report.seconds = time.perf_counter() - t0
    _append_csv(out / "metrics.csv", METRICS_FIELDS, rows)
    report.append_to(out / "report.txt")
    for k, (mean, std) in _summary(list(report.per_seed.values())).items():
        print(f"{k}: {mean:.4f} ± {std:.4f}")
    return report


def cmd_eval(model_path: Path, graph_path: Path, pairs_path: Path, out: Path, label: str = "") -> dict[str, float]:
    model = load_model(model_path)
    with open(graph_path) as fh:
        g = read_graph(fh)
    with open(pairs_path) as fh:
        pairs = LabeledPairSet.read_csv(fh)
    if len(pairs) == 0:
        raise CliError(f"{pairs_path} contains no pairs")
    scores = predict_batch(g, pairs.pairs, model)
    metrics = evaluate(model.cfg.task, scores, pairs.labels)
    out.mkdir(parents=True, exist_ok=True)
    _write_scores(out / "eval_scores.csv", pairs.pairs, scores, pairs.labels)
    cfg = model.cfg
    _append_csv(out / "metrics.csv", METRICS_FIELDS, _metric_rows(cfg, "", f"leap-{cfg.aggregator}", cfg.test_fraction, cfg.seed, metrics))
    x = label or cfg.dataset or pairs_path.stem
    _append_csv(out / "plot_data.csv", PLOT_FIELDS, [dict(x=x, method=f"leap-{cfg.aggregator}", metric=k, value=repr(v)) for k, v in metrics.items()])
    for k, v in metrics.items():
        print(f"{k}={v:.6f}")
    return metrics


def baseline_metrics(split: SplitResult, method: str, task: str) -> tuple[dict[str, float], np.ndarray]:
    scores = baselines.score_pairs(split.train_graph, split.test_set.pairs, method, task=task)
    return evaluate(task, scores, split.test_set.labels), scores


def cmd_baseline(cfg: ExperimentConfig, method: str, seeds: Sequence[int], out: Path, split_dir: Optional[Path] = None):
    if method.lower() not in baselines.METHODS:
        raise CliError(f"unknown method {method!r}; available: {', '.join(baselines.METHODS)}")
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(f"baseline {method} on {cfg.dataset or split_dir} ({cfg.task})", cfg, "")
    t0 = time.perf_counter()
    rows = []
    if split_dir is not None:
        runs = [(cfg.seed, read_split(split_dir))]
    else:
        g = _load_graph(cfg)
        report.input_hash = input_hash(cfg)
        runs = [(s, _split(g, cfg, s)) for s in seeds]
    for seed, split in runs:
        metrics, scores = baseline_metrics(split, method, cfg.task)
        report.per_seed[seed] = metrics
        rows += _metric_rows(cfg, report.input_hash, method, cfg.test_fraction, seed, metrics)
        _write_scores(out / f"{method}_seed{seed}_scores.csv", split.test_set.pairs, scores, split.test_set.labels)
        print(f"seed {seed}: " + "  ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    report.seconds = time.perf_counter() - t0
    _append_csv(out / "metrics.csv", METRICS_FIELDS, rows)
    report.append_to(out / "report.txt")
    return report


def sweep_fractions(start: float, stop: float, step: float) -> list[float]:
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def cmd_sweep(cfg: ExperimentConfig, seeds: Sequence[int], out: Path, fractions: Sequence[float], methods: Sequence[str]):
    """WSN test-fraction sweep: LEAP and the given baselines on identical splits."""
    g = _load_graph(cfg)
    out.mkdir(parents=True, exist_ok=True)
    ihash = input_hash(cfg)
    t0 = time.perf_counter()
    rows, plot = [], []
    leap_name = f"leap-{cfg.aggregator}"
    for frac in fractions:
        per_method: dict[str, list[dict[str, float]]] = {m: [] for m in (leap_name, *methods)}
        for seed in seeds:
            metrics, split = run_leap_seed(g, cfg, seed, out / f"delta{frac:g}" / f"seed{seed}", frac)
            per_method[leap_name].append(metrics)
            rows += _metric_rows(cfg, ihash, leap_name, frac, seed, metrics)
            for m in methods:
                bm, _ = baseline_metrics(split, m, cfg.task)
                per_method[m].append(bm)
                rows += _metric_rows(cfg, ihash, m, frac, seed, bm)
        for m, results in per_method.items():
            for k, (mean, _) in _summary(results).items():
                plot.append(dict(x=frac, method=m, metric=k, value=repr(mean)))
                print(f"fraction={frac:g} {m}: {k}={mean:.4f}")
    _append_csv(out / "metrics.csv", METRICS_FIELDS, rows)
    _append_csv(out / "plot_data.csv", PLOT_FIELDS, plot)
    report = RunReport(f"sweep {leap_name} on {cfg.dataset} over {list(fractions)}", cfg, ihash, seconds=time.perf_counter() - t0)
    report.append_to(out / "report.txt")
    return report


# ---------------------------------------------------------------- parsing


def _config_from_args(args) -> ExperimentConfig:
    base = ExperimentConfig()
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}") from None
        base = parse_config(text)
    changes = {}
    if getattr(args, "dataset", None):
        changes["dataset"] = args.dataset
    if getattr(args, "task", None):
        changes["task"] = TASK_ALIASES[args.task]
    if getattr(args, "aggregator", None):
        changes["aggregator"] = args.aggregator
    if getattr(args, "fraction", None) is not None:
        changes["test_fraction"] = args.fraction
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = (args.seed,)
        changes["seed"] = args.seed
    return base.replace(**changes) if changes else base


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leap", description="Path-aggregation edge property prediction.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="runs"):
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--dataset", help="registered dataset name or edge-list path")
        sp.add_argument("--seed", type=int, help="run this seed only (default: seeds from config)")
        sp.add_argument("--task", choices=("lp", "wsn"))
        sp.add_argument("--out-dir", default=out_default, type=Path)

    sp = sub.add_parser("split", help="write a train/test split")
    common(sp)
    sp.add_argument("--fraction", type=float, help="test fraction (link prediction) or delta (WSN)")

    sp = sub.add_parser("train", help="train and evaluate LEAP for each seed")
    common(sp)
    sp.add_argument("--aggregator", choices=("avgpool", "densemax", "seqofseq", "edgeconv"))
    sp.add_argument("--fraction", type=float)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a pairs file")
    sp.add_argument("--model", required=True, type=Path)
    sp.add_argument("--graph", required=True, type=Path, help="observed graph (train_graph.txt of the split)")
    sp.add_argument("--pairs", required=True, type=Path)
    sp.add_argument("--label", default="", help="x value written to the plot-data CSV")
    sp.add_argument("--out-dir", default="runs", type=Path)

    sp = sub.add_parser("baseline", help="score test pairs with a heuristic")
    common(sp)
    sp.add_argument("--method", required=True)
    sp.add_argument("--fraction", type=float)
    sp.add_argument("--split-dir", type=Path, help="use an existing split instead of splitting the dataset")

    sp = sub.add_parser("sweep", help="WSN sweep over test fractions")
    common(sp)
    sp.add_argument("--aggregator", choices=("avgpool", "densemax", "seqofseq", "edgeconv"))
    sp.add_argument("--start", type=float, default=0.1)
    sp.add_argument("--stop", type=float, default=0.8)
    sp.add_argument("--step", type=float, default=0.1)
    sp.add_argument("--methods", default="reciprocal,pagerank", help="comma-separated baselines")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "eval":
            cmd_eval(args.model, args.graph, args.pairs, args.out_dir, args.label)
            return 0
        cfg = _config_from_args(args)
        if args.command == "split":
            cmd_split(cfg, cfg.seeds, args.out_dir)
        elif args.command == "train":
            cmd_train(cfg, cfg.seeds, args.out_dir)
        elif args.command == "baseline":
            cmd_baseline(cfg, args.method, cfg.seeds, args.out_dir, args.split_dir)
        elif args.command == "sweep":
            if cfg.task != "wsn":
                raise CliError("sweep runs the WSN protocol; pass --task wsn or set task = wsn")
            fractions = sweep_fractions(args.start, args.stop, args.step)
            methods = [m for m in args.methods.split(",") if m]
            cmd_sweep(cfg, cfg.seeds, args.out_dir, fractions, methods)
    except (CliError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
