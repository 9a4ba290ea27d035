"""Registry of benchmark edge lists and how to read them.

Files are looked up in ``$LEAP_DATA_DIR`` (default ``./data``). Nothing is
downloaded here; ``scripts/fetch_datasets.py`` documents where each file
comes from and converts it into the expected layout.
"""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .graph import GRAPH_HEADER, Graph, load_edge_list, normalize_weights, read_graph


class DatasetNotFound(FileNotFoundError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    filename: str
    directed: bool = False
    weighted: bool = False
    delimiter: Optional[str] = None
    extra_columns: bool = False
    nodes: Optional[int] = None
    edges: Optional[int] = None


REGISTRY: dict[str, DatasetSpec] = {
    s.name: s
    for s in (
        DatasetSpec("usair", "usair.txt", nodes=332, edges=2126),
        DatasetSpec("celegans", "celegans.txt", nodes=297, edges=2148),
        DatasetSpec("arxiv", "ca-AstroPh.txt", nodes=18722, edges=198110),
        DatasetSpec("fb", "facebook_combined.txt", nodes=4039, edges=88234),
        DatasetSpec(
            "bitcoin_alpha", "soc-sign-bitcoinalpha.csv", True, True, ",", True, nodes=3783, edges=24186
        ),
        DatasetSpec("bitcoin_otc", "soc-sign-bitcoinotc.csv", True, True, ",", True, nodes=5881, edges=35592),
    )
}
ALIASES = {"c.ele": "celegans", "cele": "celegans", "astroph": "arxiv", "facebook": "fb"}


def data_dir() -> Path:
    return Path(os.environ.get("LEAP_DATA_DIR", "data"))


def resolve(name: str) -> DatasetSpec:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in REGISTRY:
        raise KeyError(f"unknown dataset {name!r}; known: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[key]


def dataset_path(name: str, root: Optional[Path] = None) -> Path:
    spec = resolve(name)
    root = Path(root) if root is not None else data_dir()
    for candidate in (root / spec.filename, root / (spec.filename + ".gz")):
        if candidate.exists():
            return candidate
    raise DatasetNotFound(
        f"dataset {spec.name!r} not found: expected {root / spec.filename} "
        f"(set LEAP_DATA_DIR or run scripts/fetch_datasets.py)"
    )


def available(name: str, root: Optional[Path] = None) -> bool:
    try:
        dataset_path(name, root)
    except DatasetNotFound:
        return False
    return True


def load_dataset(name: str, root: Optional[Path] = None, normalize: bool = True) -> Graph:
    """Read a registered dataset; weighted graphs are rescaled into [-1, 1] when ``normalize``."""
    spec = resolve(name)
    path = dataset_path(name, root)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt") as fh:
        g = load_edge_list(
            fh, directed=spec.directed, weighted=spec.weighted, delimiter=spec.delimiter, extra_columns=spec.extra_columns
        )
    # ratings span [-10, 10] with both extremes present, so max-abs scaling divides by 10
    return normalize_weights(g) if spec.weighted and normalize else g


def load_graph_source(source: str, directed: bool = False, weighted: bool = False, normalize: bool = True) -> Graph:
    """Load a registered dataset by name, or a file path.

    Files starting with the ``# leap-graph`` header are read verbatim; any
    other file is parsed as a whitespace edge list with the given flags.
    """
    path = Path(source)
    if not path.is_file():
        return load_dataset(source, normalize=normalize)
    with open(path) as fh:
        first = fh.readline()
        fh.seek(0)
        if first.startswith(GRAPH_HEADER):
            g = read_graph(fh)
        else:
            g = load_edge_list(fh, directed=directed, weighted=weighted)
    return normalize_weights(g) if g.weighted and normalize else g
