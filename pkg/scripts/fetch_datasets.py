#!/usr/bin/env python3
"""Download the benchmark graphs into $LEAP_DATA_DIR (default ./data).

USAir and C.elegans are distributed as MATLAB adjacency matrices (variable
``net``) and are converted to whitespace edge lists with 1-based ids. The
SNAP graphs are stored as downloaded (gzip is read transparently).

    python3 scripts/fetch_datasets.py usair celegans bitcoin_alpha
    python3 scripts/fetch_datasets.py --all
"""

from __future__ import annotations

import argparse
import io
import os
import sys
import urllib.request
from pathlib import Path

SEAL = "https://raw.githubusercontent.com/muhanzhang/SEAL/master/MATLAB/data"
SNAP = "https://snap.stanford.edu/data"

SOURCES = {
    "usair": (f"{SEAL}/USAir.mat", "usair.txt", "mat"),
    "celegans": (f"{SEAL}/Celegans.mat", "celegans.txt", "mat"),
    "arxiv": (f"{SNAP}/ca-AstroPh.txt.gz", "ca-AstroPh.txt.gz", "raw"),
    "fb": (f"{SNAP}/facebook_combined.txt.gz", "facebook_combined.txt.gz", "raw"),
    "bitcoin_alpha": (f"{SNAP}/soc-sign-bitcoinalpha.csv.gz", "soc-sign-bitcoinalpha.csv.gz", "raw"),
    "bitcoin_otc": (f"{SNAP}/soc-sign-bitcoinotc.csv.gz", "soc-sign-bitcoinotc.csv.gz", "raw"),
}


def mat_to_edge_list(payload: bytes) -> str:
    import scipy.io
    import scipy.sparse as sp

    net = sp.triu(sp.csr_matrix(scipy.io.loadmat(io.BytesIO(payload))["net"]), k=1).tocoo()
    return "".join(f"{u + 1} {v + 1}\n" for u, v in sorted(zip(net.row.tolist(), net.col.tolist())))


def fetch(name: str, root: Path) -> Path:
    url, filename, kind = SOURCES[name]
    target = root / filename
    if target.exists():
        print(f"{name}: already present at {target}")
        return target
    print(f"{name}: downloading {url}")
    with urllib.request.urlopen(url, timeout=120) as resp:
        payload = resp.read()
    root.mkdir(parents=True, exist_ok=True)
    if kind == "mat":
        target.write_text(mat_to_edge_list(payload))
    else:
        target.write_bytes(payload)
    print(f"{name}: wrote {target}")
    return target


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("names", nargs="*", help=f"any of: {', '.join(SOURCES)}")
    p.add_argument("--all", action="store_true")
    p.add_argument("--data-dir", type=Path, default=Path(os.environ.get("LEAP_DATA_DIR", "data")))
    args = p.parse_args(argv)
    names = list(SOURCES) if args.all else args.names
    if not names:
        p.error("name at least one dataset or pass --all")
    unknown = sorted(set(names) - set(SOURCES))
    if unknown:
        p.error(f"unknown dataset(s): {', '.join(unknown)}")
    failed = 0
    for name in names:
        try:
            fetch(name, args.data_dir)
        except OSError as exc:
            print(f"{name}: failed ({exc})", file=sys.stderr)
            failed += 1
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
