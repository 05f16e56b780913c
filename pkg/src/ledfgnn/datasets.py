"""Plain-text dataset directories, loaders/savers, and hyperparameter presets.

A dataset directory holds::

    meta.json             {"name", "n", "d", "c"}
    edges.tsv             one "src<TAB>dst" line per edge, 0-indexed
    features.tsv          dense: d tab-separated reals per line
    features.sparse.tsv   sparse alternative: "col:value" tokens per line
    labels.tsv            one integer per line
    splits.tsv            one tag per line, from {train, valid, test, none}

Exactly one of the two feature files must be present. Files are written in a
canonical order (edges lexsorted ascending, features at 9 significant digits)
so repeated saves are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import SPLIT_TAGS, Graph

META_KEYS = ("name", "n", "d", "c")
BACKBONES = ("mlp", "gcn")


class DatasetFormatError(Exception):
    """Raised for malformed or inconsistent dataset directories."""


def _fail(path: Path, msg: str, line: int | None = None) -> None:
    where = f"{path}:{line}" if line is not None else str(path)
    raise DatasetFormatError(f"{where}: {msg}")


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DatasetFormatError(f"{path}: missing file")
    return path.read_text().splitlines()


def load_dataset(path) -> Graph:
    """Load a dataset directory into a :class:`Graph`.

    Duplicate and reversed edge lines collapse onto one undirected edge;
    self-loop lines are dropped (self-loops enter only at normalization).
    """
    root = Path(path)
    if not root.is_dir():
        raise DatasetFormatError(f"{root}: not a dataset directory")

    meta_path = root / "meta.json"
    try:
        meta = json.loads("\n".join(_read_lines(meta_path)))
    except json.JSONDecodeError as exc:
        _fail(meta_path, f"invalid JSON ({exc})")
    if sorted(meta) != sorted(META_KEYS):
        _fail(meta_path, f"keys must be exactly {list(META_KEYS)}, got {sorted(meta)}")
    n, d, c = int(meta["n"]), int(meta["d"]), int(meta["c"])

    edges_path = root / "edges.tsv"
    pairs = []
    for ln, line in enumerate(_read_lines(edges_path), start=1):
        if not line.strip():
            continue
        toks = line.split()
        if len(toks) != 2:
            _fail(edges_path, f"expected 'src<TAB>dst', got {line!r}", ln)
        try:
            i, j = int(toks[0]), int(toks[1])
        except ValueError:
            _fail(edges_path, f"non-integer endpoint in {line!r}", ln)
        if not (0 <= i < n and 0 <= j < n):
            _fail(edges_path, f"endpoint out of [0, {n}) in {line!r}", ln)
        if i != j:
            pairs.append((min(i, j), max(i, j)))
    edges = np.array(sorted(set(pairs)), dtype=np.int64).reshape(-1, 2)

    dense_path = root / "features.tsv"
    sparse_path = root / "features.sparse.tsv"
    if dense_path.is_file() == sparse_path.is_file():
        _fail(root, "exactly one of features.tsv / features.sparse.tsv must exist")
    features = (_load_dense_features(dense_path, n, d) if dense_path.is_file()
                else _load_sparse_features(sparse_path, n, d))

    labels_path = root / "labels.tsv"
    lab_lines = _read_lines(labels_path)
    if len(lab_lines) != n:
        _fail(labels_path, f"expected {n} lines, found {len(lab_lines)}")
    labels = np.empty(n, dtype=np.int64)
    for ln, line in enumerate(lab_lines, start=1):
        try:
            lab = int(line.strip())
        except ValueError:
            _fail(labels_path, f"non-integer label {line!r}", ln)
        if not 0 <= lab < c:
            _fail(labels_path, f"label {lab} out of [0, {c})", ln)
        labels[ln - 1] = lab

    splits_path = root / "splits.tsv"
    split_lines = _read_lines(splits_path)
    if len(split_lines) != n:
        _fail(splits_path, f"expected {n} lines, found {len(split_lines)}")
    split = np.empty(n, dtype="U5")
    for ln, line in enumerate(split_lines, start=1):
        tag = line.strip()
        if tag not in SPLIT_TAGS:
            _fail(splits_path, f"unknown split tag {tag!r}", ln)
        split[ln - 1] = tag

    return Graph(n=n, edges=edges, features=features, labels=labels,
                 split=split, c=c, d=d)


def _load_dense_features(path: Path, n: int, d: int) -> np.ndarray:
    lines = _read_lines(path)
    if len(lines) != n:
        _fail(path, f"expected {n} lines, found {len(lines)}")
    out = np.empty((n, d))
    for ln, line in enumerate(lines, start=1):
        toks = line.split("\t") if line else []
        if len(toks) != d:
            _fail(path, f"expected {d} values, found {len(toks)}", ln)
        try:
            out[ln - 1] = [float(t) for t in toks]
        except ValueError:
            _fail(path, "non-numeric feature value", ln)
    return out


def _load_sparse_features(path: Path, n: int, d: int) -> sp.csr_array:
    lines = _read_lines(path)
    if len(lines) != n:
        _fail(path, f"expected {n} lines, found {len(lines)}")
    rows, cols, vals = [], [], []
    for ln, line in enumerate(lines, start=1):
        seen = set()
        for tok in line.split():
            col_s, _, val_s = tok.partition(":")
            try:
                col, val = int(col_s), float(val_s)
            except ValueError:
                _fail(path, f"bad 'col:value' token {tok!r}", ln)
            if not 0 <= col < d:
                _fail(path, f"column {col} out of [0, {d})", ln)
            if col in seen:
                _fail(path, f"duplicate column {col}", ln)
            seen.add(col)
            rows.append(ln - 1)
            cols.append(col)
            vals.append(val)
    return sp.csr_array((vals, (rows, cols)), shape=(n, d))


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def save_dataset(graph: Graph, path, name: str | None = None) -> None:
    """Write ``graph`` as a dataset directory; output is byte-stable.

    Sparse feature matrices go to features.sparse.tsv, dense ones to
    features.tsv. ``name`` defaults to the directory basename.
    """
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        meta = {"name": name or root.name, "n": graph.n, "d": graph.d, "c": graph.c}
        (root / "meta.json").write_text(json.dumps(meta) + "\n")
        (root / "edges.tsv").write_text(
            "".join(f"{i}\t{j}\n" for i, j in graph.edges))
        if sp.issparse(graph.features):
            feats = sp.csr_array(graph.features)
            lines = []
            for i in range(graph.n):
                row = feats[[i], :].tocoo()
                order = np.argsort(row.coords[1])
                lines.append(" ".join(
                    f"{row.coords[1][k]}:{_fmt(row.data[k])}" for k in order))
            (root / "features.sparse.tsv").write_text("\n".join(lines) + "\n")
        else:
            lines = ["\t".join(_fmt(v) for v in row) for row in graph.features]
            (root / "features.tsv").write_text("\n".join(lines) + "\n")
        (root / "labels.tsv").write_text(
            "".join(f"{lab}\n" for lab in graph.labels))
        (root / "splits.tsv").write_text(
            "".join(f"{tag}\n" for tag in graph.split))
    except OSError as exc:
        raise DatasetFormatError(f"{root}: cannot write dataset ({exc})") from exc


@dataclass(frozen=True)
class HyperPreset:
    """Per-dataset hyperparameters for one backbone."""

    dataset: str
    backbone: str
    k: int
    Q1: int
    Q2: int
    gamma: float = 0.5
    K: int = 3
    lr: float = 0.01
    weight_decay: float = 0.0005
    dropout: float = 0.5
    hidden: int = 128
    epsilon: float = 0.1

    def __post_init__(self):
        if self.Q1 < 1 or self.Q2 < 1:
            raise ValueError("Q1 and Q2 must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.K < 2:
            raise ValueError("K must be >= 2")


@dataclass(frozen=True)
class DatasetStats:
    """Published per-dataset statistics and official split sizes."""

    name: str
    n: int
    directed_edges: int
    d: int
    c: int
    homophily: float
    train_n: int
    valid_n: int
    test_n: int


# name -> (n, directed edge count, d, c, homophily, train/valid/test sizes)
_STATS = {
    "cora":        (2708, 10556, 1433, 7, 0.81, 140, 500, 1000),
    "citeseer":    (3327, 9104, 3703, 6, 0.74, 120, 500, 1000),
    "pubmed":      (19717, 88648, 500, 3, 0.80, 60, 500, 1000),
    "acm":         (3025, 26256, 1870, 3, 0.82, 60, 600, 1200),
    "coauthor-cs": (18333, 163788, 6805, 15, 0.81, 300, 500, 1000),
    "arxiv2023":   (46198, 78548, 300, 40, 0.65, 27718, 9239, 9239),
    "mnist":       (2000, 26588, 30, 10, 0.87, 200, 300, 1500),
    "blogcatalog": (5196, 343486, 8189, 6, 0.40, 120, 500, 1000),
    "texas":       (183, 325, 1703, 5, 0.11, 10, 50, 100),
    "wisconsin":   (251, 515, 1703, 5, 0.21, 10, 50, 100),
    "cornell":     (183, 298, 1703, 5, 0.30, 10, 50, 100),
    "chameleon":   (2277, 36101, 2325, 5, 0.23, 114, 500, 1000),
    "squirrel":    (5201, 217073, 2089, 5, 0.22, 260, 500, 1000),
}

# top-k neighbor count of the similarity rewiring, per dataset
_TOPK = {
    "cora": 2, "citeseer": 3, "pubmed": 2, "acm": 7, "coauthor-cs": 10,
    "arxiv2023": 10, "mnist": 10, "blogcatalog": 20, "texas": 20,
    "wisconsin": 20, "cornell": 20, "chameleon": 40, "squirrel": 40,
}

# propagation depths (Q1 on the original topology, Q2 on the reconstructed)
_DEPTHS = {
    "mlp": {
        "cora": (10, 3), "citeseer": (10, 9), "pubmed": (2, 7), "acm": (1, 9),
        "coauthor-cs": (3, 10), "arxiv2023": (7, 8), "mnist": (7, 10),
        "blogcatalog": (3, 8), "texas": (3, 8), "wisconsin": (2, 10),
        "cornell": (9, 7), "chameleon": (7, 3), "squirrel": (2, 10),
    },
    "gcn": {
        "cora": (15, 11), "citeseer": (6, 20), "pubmed": (7, 10), "acm": (7, 18),
        "coauthor-cs": (10, 10), "arxiv2023": (3, 9), "mnist": (6, 9),
        "blogcatalog": (16, 14), "texas": (8, 16), "wisconsin": (11, 15),
        "cornell": (18, 2), "chameleon": (10, 16), "squirrel": (10, 18),
    },
}


def normalize_dataset_name(name: str) -> str:
    return name.strip().lower().replace("_", "-").replace(" ", "-")


def known_datasets() -> tuple[str, ...]:
    return tuple(_STATS)


def dataset_stats(dataset: str) -> DatasetStats:
    key = normalize_dataset_name(dataset)
    if key not in _STATS:
        raise ValueError(
            f"unknown dataset {dataset!r}; known: {', '.join(_STATS)}")
    n, m, d, c, h, tr, va, te = _STATS[key]
    return DatasetStats(name=key, n=n, directed_edges=m, d=d, c=c,
                        homophily=h, train_n=tr, valid_n=va, test_n=te)


def preset(dataset: str, backbone: str) -> HyperPreset:
    """Published hyperparameters for a (dataset, backbone) pair."""
    key = normalize_dataset_name(dataset)
    if backbone not in BACKBONES or key not in _TOPK:
        pairs = ", ".join(f"({n}, {b})" for n in _TOPK for b in BACKBONES)
        raise ValueError(
            f"no preset for ({dataset!r}, {backbone!r}); known pairs: {pairs}")
    q1, q2 = _DEPTHS[backbone][key]
    return HyperPreset(dataset=key, backbone=backbone, k=_TOPK[key],
                       Q1=q1, Q2=q2)


def sbm_preset(backbone: str, **overrides) -> HyperPreset:
    """Default hyperparameters for synthetic SBM runs (not in the registry)."""
    base = dict(dataset="sbm", backbone=backbone, k=5, Q1=5, Q2=5)
    base.update(overrides)
    return HyperPreset(**base)


def make_stratified_split(graph: Graph, train_n: int, valid_n: int,
                          test_n: int, seed: int = 0) -> Graph:
    """Assign a fixed-seed split: train stratified per class, then valid/test.

    The train quota is spread round-robin over classes (20 per class for the
    citation benchmarks); valid and test are drawn from the remaining nodes
    in shuffled order. Remaining nodes are tagged ``none``.
    """
    n = graph.n
    if train_n + valid_n + test_n > n:
        raise ValueError("split sizes exceed node count")
    rng = np.random.default_rng(seed)
    split = np.full(n, "none", dtype="U5")
    per_class = np.full(graph.c, train_n // graph.c, dtype=np.int64)
    per_class[: train_n % graph.c] += 1
    taken = np.zeros(n, dtype=bool)
    for cls in range(graph.c):
        members = np.flatnonzero(graph.labels == cls)
        pick = rng.permutation(members)[: per_class[cls]]
        split[pick] = "train"
        taken[pick] = True
    rest = rng.permutation(np.flatnonzero(~taken))
    split[rest[:valid_n]] = "valid"
    split[rest[valid_n: valid_n + test_n]] = "test"
    return graph.with_split(split)
