"""Graph container, symmetric normalization, propagation and homophily utilities.

Edges are stored as undirected canonical pairs (i < j); the adjacency is
materialized symmetrically on demand. Self-loops are never stored: they are
added only inside :func:`normalize`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

SPLIT_TAGS = ("train", "valid", "test", "none")


def canonical_edges(edges) -> np.ndarray:
    """Return edges as a unique (m, 2) int64 array with i < j, lexsorted.

    Reversed duplicates collapse onto the same canonical pair. Self-loops are
    rejected.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if np.any(e[:, 0] == e[:, 1]):
        raise ValueError("self-loop pairs are not allowed in the edge list")
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    e = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return e


@dataclass(frozen=True)
class Graph:
    """Undirected graph with dense or sparse node features and split tags.

    Attributes
    ----------
    n : int
        Node count.
    edges : (m, 2) int64 array
        Canonical undirected pairs, i < j, no duplicates, no self-loops.
    features : (n, d) ndarray or scipy CSR
        Real-valued node features.
    labels : (n,) int64 array
        Class ids in [0, c); exactly one label per node.
    split : (n,) array of str
        Tags from {train, valid, test, none}.
    c, d : int
        Class count and feature dimension.
    """

    n: int
    edges: np.ndarray
    features: object
    labels: np.ndarray
    split: np.ndarray
    c: int
    d: int

    def __post_init__(self):
        object.__setattr__(self, "edges", canonical_edges(self.edges))
        labels = np.asarray(self.labels, dtype=np.int64)
        split = np.asarray(self.split, dtype="U5")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "split", split)
        if self.n <= 0:
            raise ValueError("graph must have at least one node")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise ValueError("edge endpoint out of range [0, n)")
        if labels.shape != (self.n,):
            raise ValueError(f"labels must have shape ({self.n},)")
        if np.any(labels < 0) or np.any(labels >= self.c):
            raise ValueError(f"labels must lie in [0, {self.c})")
        if split.shape != (self.n,):
            raise ValueError(f"split must have shape ({self.n},)")
        bad = set(np.unique(split)) - set(SPLIT_TAGS)
        if bad:
            raise ValueError(f"unknown split tags: {sorted(bad)}")
        if self.feature_shape != (self.n, self.d):
            raise ValueError(f"features must have shape ({self.n}, {self.d})")
        if isinstance(self.features, np.ndarray):
            self.features.setflags(write=False)
        labels.setflags(write=False)
        self.edges.setflags(write=False)

    @property
    def feature_shape(self):
        return tuple(self.features.shape)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def mask(self, tag: str) -> np.ndarray:
        if tag not in SPLIT_TAGS:
            raise ValueError(f"unknown split tag {tag!r}")
        return self.split == tag

    def adjacency(self) -> sp.csr_array:
        """Symmetric binary adjacency without self-loops, CSR."""
        m = self.num_edges
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.ones(2 * m, dtype=np.float64)
        return sp.csr_array((data, (rows, cols)), shape=(self.n, self.n))

    def dense_features(self) -> np.ndarray:
        if isinstance(self.features, np.ndarray):
            return self.features
        return self.features.toarray()

    def with_edges(self, edges) -> "Graph":
        return replace(self, edges=canonical_edges(edges))

    def with_split(self, split) -> "Graph":
        return replace(self, split=np.asarray(split, dtype="U5"))


def make_graph(edges, features, labels, split, c=None) -> Graph:
    """Build a :class:`Graph`, inferring n, d and (optionally) c."""
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    if c is None:
        c = int(labels.max()) + 1 if n else 0
    if sp.issparse(features):
        features = sp.csr_array(features).astype(np.float64)
    else:
        features = np.asarray(features, dtype=np.float64)
    d = int(features.shape[1])
    return Graph(n=n, edges=edges, features=features, labels=labels,
                 split=np.asarray(split, dtype="U5"), c=int(c), d=d)


@dataclass(frozen=True)
class NormAdj:
    """Symmetrically normalized adjacency D^{-1/2} (A + I) D^{-1/2}, CSR."""

    n: int
    mat: sp.csr_array

    def __matmul__(self, other):
        return self.mat @ other


def normalize(graph: Graph) -> NormAdj:
    """Return D^{-1/2} (A + I) D^{-1/2} with degrees taken from A + I.

    Isolated nodes end up with degree 1 through the self-loop, so their
    diagonal entry is exactly 1 and no special-casing is needed downstream.
    """
    a_tilde = graph.adjacency() + sp.eye_array(graph.n, format="csr")
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    mat = sp.csr_array(a_tilde.multiply(d_inv_sqrt[:, None]).multiply(d_inv_sqrt[None, :]))
    mat.sort_indices()
    return NormAdj(n=graph.n, mat=mat)


def propagate(adj: NormAdj, x: np.ndarray, q: int) -> np.ndarray:
    """Return adj^q @ x via q successive sparse-dense products (q = 0: x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != adj.n:
        raise ValueError(f"x has {x.shape[0]} rows, adjacency expects {adj.n}")
    if q < 0:
        raise ValueError("q must be >= 0")
    out = x
    for _ in range(q):
        out = adj.mat @ out
    return out


def edge_homophily(graph: Graph) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    if graph.num_edges == 0:
        raise ValueError("edge homophily is undefined on a graph with no edges")
    same = graph.labels[graph.edges[:, 0]] == graph.labels[graph.edges[:, 1]]
    return float(np.mean(same))


def is_connected(graph: Graph) -> bool:
    ncomp, _ = connected_components(graph.adjacency(), directed=False)
    return ncomp == 1


def rank1_distance(adj: NormAdj, l: int) -> float:
    """Relative Frobenius distance between adj^l and its best rank-1 approximation.

    The dominant eigenpair is found by power iteration (tol 1e-10, at most
    10000 iterations). On a connected graph with self-loops the dominant
    eigenvalue is 1, so adj^l collapses onto the rank-1 limit as l grows and
    the returned distance decreases monotonically.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    a = adj.mat
    n = adj.n
    v = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(10000):
        w = a @ v
        w = w / np.linalg.norm(w)
        if np.max(np.abs(w - v)) < 1e-10:
            v = w
            break
        v = w
    lam = float(v @ (a @ v))
    m = np.eye(n)
    for _ in range(l):
        m = a @ m
    rank1 = (lam ** l) * np.outer(v, v)
    return float(np.linalg.norm(m - rank1) / np.linalg.norm(m))


@dataclass(frozen=True)
class SbmSpec:
    """Stochastic block model with controllable homophily and feature signal.

    ``target_homophily`` fixes the expected fraction of intra-class edges,
    ``avg_degree`` the expected mean degree. ``feature_signal`` in [0, 1]
    interpolates node features between the class mean (one-hot block over
    ceil(d/c) dimensions) and uniform noise. ``d`` defaults to 8 * c.
    """

    n: int
    c: int
    target_homophily: float
    avg_degree: float
    feature_signal: float
    seed: int
    d: int = 0

    def feature_dim(self) -> int:
        return self.d if self.d > 0 else 8 * self.c


def _sample_pairs(rng, n_pairs: int, p: float, decode) -> np.ndarray:
    if n_pairs == 0 or p <= 0.0:
        return np.empty((0, 2), dtype=np.int64)
    k = rng.binomial(n_pairs, p)
    if k == 0:
        return np.empty((0, 2), dtype=np.int64)
    codes = rng.choice(n_pairs, size=k, replace=False)
    return decode(np.sort(codes))


def sbm_generate(spec: SbmSpec) -> Graph:
    """Sample a labeled SBM graph with features and a stratified split.

    Intra/inter edge probabilities are solved from ``target_homophily`` and
    ``avg_degree`` against the mean class size; infeasible probabilities
    (outside [0, 1]) raise ValueError. Deterministic given ``spec.seed``.
    """
    n, c = spec.n, spec.c
    if n < 2 or c < 1 or c > n:
        raise ValueError("need n >= 2 and 1 <= c <= n")
    if not (0.0 < spec.target_homophily <= 1.0):
        raise ValueError("target_homophily must lie in (0, 1]")
    if spec.avg_degree <= 0:
        raise ValueError("avg_degree must be positive")
    if not (0.0 <= spec.feature_signal <= 1.0):
        raise ValueError("feature_signal must lie in [0, 1]")

    sizes = np.full(c, n // c, dtype=np.int64)
    sizes[: n % c] += 1
    labels = np.repeat(np.arange(c), sizes)
    starts = np.concatenate([[0], np.cumsum(sizes)])

    s_mean = n / c
    h, deg = spec.target_homophily, spec.avg_degree
    p_in = h * deg / max(s_mean - 1.0, 1.0)
    p_out = 0.0 if c == 1 else (1.0 - h) * deg / (n - s_mean)
    if p_in > 1.0 or p_out > 1.0:
        raise ValueError(
            f"infeasible SBM: p_in={p_in:.3f}, p_out={p_out:.3f} must lie in [0, 1]")

    rng = np.random.default_rng(spec.seed)
    chunks = []
    for a in range(c):
        ia = np.arange(starts[a], starts[a + 1])
        sa = sizes[a]
        tri_r, tri_c = np.triu_indices(sa, k=1)

        def decode_intra(codes, ia=ia, tri_r=tri_r, tri_c=tri_c):
            return np.stack([ia[tri_r[codes]], ia[tri_c[codes]]], axis=1)

        chunks.append(_sample_pairs(rng, sa * (sa - 1) // 2, p_in, decode_intra))
        for b in range(a + 1, c):
            ib = np.arange(starts[b], starts[b + 1])
            sb = sizes[b]

            def decode_inter(codes, ia=ia, ib=ib, sb=sb):
                return np.stack([ia[codes // sb], ib[codes % sb]], axis=1)

            chunks.append(_sample_pairs(rng, int(sa) * int(sb), p_out, decode_inter))
    edges = np.concatenate(chunks, axis=0) if chunks else np.empty((0, 2), np.int64)

    d = spec.feature_dim()
    width = -(-d // c)  # ceil
    means = np.zeros((c, d))
    for j in range(c):
        means[j, j * width: min((j + 1) * width, d)] = 1.0
    s = spec.feature_signal
    features = s * means[labels] + (1.0 - s) * rng.random((n, d))

    split = np.full(n, "none", dtype="U5")
    for j in range(c):
        idx = rng.permutation(np.arange(starts[j], starts[j + 1]))
        sz = len(idx)
        n_tr = max(1, int(0.2 * sz))
        n_va = max(1, int(0.3 * sz)) if sz - n_tr >= 2 else max(0, sz - n_tr - 1)
        split[idx[:n_tr]] = "train"
        split[idx[n_tr: n_tr + n_va]] = "valid"
        split[idx[n_tr + n_va:]] = "test"

    return Graph(n=n, edges=edges, features=features, labels=labels,
                 split=split, c=c, d=d)
