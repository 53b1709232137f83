"""Structure and label corruption, plus a stochastic block model generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph_core import Dataset, LabelSet, labelset_from_labels, make_dataset

__all__ = [
    "NoiseSpec",
    "SbmSpec",
    "measure_structure_noise",
    "inject_structure_noise",
    "inject_label_noise",
    "generate_sbm",
]


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    target_rate: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("structure", "label"):
            raise ValueError(f"kind must be 'structure' or 'label', got {self.kind!r}")
        if not 0.0 <= self.target_rate <= 1.0:
            raise ValueError(f"rate must be in [0, 1], got {self.target_rate}")


@dataclass(frozen=True)
class SbmSpec:
    n: int = 1000
    C: int = 5
    p_intra: float = 0.05
    p_inter: float = 0.002
    feature_dim: int = 32
    class_separation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_inter < self.p_intra <= 1.0:
            raise ValueError("need 0 <= p_inter < p_intra <= 1")
        if self.n < self.C or self.C < 1:
            raise ValueError("need n >= C >= 1")


def measure_structure_noise(ds: Dataset) -> float:
    """Fraction of undirected edges joining nodes of different classes."""
    edges = ds.edge_list()
    if len(edges) == 0:
        raise ValueError("graph has no edges")
    inter = ds.labels[edges[:, 0]] != ds.labels[edges[:, 1]]
    return float(inter.mean())


def _with_edges(ds: Dataset, edges: np.ndarray) -> Dataset:
    n = ds.n
    u, v = edges[:, 0], edges[:, 1]
    adj = sp.csr_matrix((np.ones(2 * len(edges)), (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(n, n))
    return make_dataset(adj, ds.features, ds.labels, ds.C, ds.name)


def _sample_new_pairs(rng, labels, existing: set, count: int, want_inter: bool) -> np.ndarray:
    """Uniform non-adjacent node pairs of the requested type, ``u < v``."""
    n = len(labels)
    chosen: set = set()
    batch = max(64, 4 * count)
    while len(chosen) < count:
        u = rng.integers(0, n, size=batch)
        v = rng.integers(0, n, size=batch)
        ok = (u != v) & ((labels[u] != labels[v]) == want_inter)
        for a, b in zip(np.minimum(u[ok], v[ok]), np.maximum(u[ok], v[ok])):
            key = int(a) * n + int(b)
            if key not in existing and key not in chosen:
                chosen.add(key)
                if len(chosen) == count:
                    break
    keys = np.fromiter(chosen, dtype=np.int64, count=count)
    return np.stack([keys // n, keys % n], axis=1)


def inject_structure_noise(ds: Dataset, spec: NoiseSpec) -> Dataset:
    """Rewire edges until the inter-class edge fraction hits ``spec.target_rate``.

    To raise the rate, uniformly chosen intra-class edges are deleted and the
    same number of uniformly chosen non-adjacent inter-class pairs added; the
    reverse lowers it. Edge count is unchanged.

    Raises
    ------
    ValueError
        If the target cannot be reached; the message gives the feasible range.
    """
    if spec.kind != "structure":
        raise ValueError("inject_structure_noise needs a 'structure' NoiseSpec")
    edges = ds.edge_list()
    m = len(edges)
    if m == 0:
        raise ValueError("graph has no edges")
    labels = ds.labels
    inter = labels[edges[:, 0]] != labels[edges[:, 1]]
    current = int(inter.sum())
    target = int(round(spec.target_rate * m))

    sizes = np.bincount(labels, minlength=ds.C).astype(np.int64)
    intra_pairs = int(np.sum(sizes * (sizes - 1) // 2))
    inter_pairs = ds.n * (ds.n - 1) // 2 - intra_pairs
    lo, hi = max(0, m - intra_pairs), min(m, inter_pairs)
    if not lo <= target <= hi:
        raise ValueError(
            f"target rate {spec.target_rate} unreachable with {m} edges; achievable range is [{lo / m:.4f}, {hi / m:.4f}]"
        )
    if target == current:
        return ds

    rng = np.random.default_rng(spec.seed)
    raise_rate = target > current
    moves = abs(target - current)
    pool = np.flatnonzero(~inter if raise_rate else inter)
    drop = rng.choice(pool, size=moves, replace=False)
    existing = set((edges[:, 0] * ds.n + edges[:, 1]).tolist())
    added = _sample_new_pairs(rng, labels, existing, moves, want_inter=raise_rate)
    keep = np.ones(m, dtype=bool)
    keep[drop] = False
    return _with_edges(ds, np.concatenate([edges[keep], added]))


def inject_label_noise(labels: LabelSet, ds: Dataset, spec: NoiseSpec) -> LabelSet:
    """Flip ``floor(rate * count)`` training labels per class to a different class.

    Flipped nodes are drawn uniformly within each class and receive a
    uniformly drawn wrong class. ``ds`` supplies the class count only;
    its ground-truth labels are not modified.
    """
    if spec.kind != "label":
        raise ValueError("inject_label_noise needs a 'label' NoiseSpec")
    if ds.C < 2:
        raise ValueError("label noise needs at least two classes")
    rng = np.random.default_rng(spec.seed)
    nodes = labels.labeled_nodes
    classes = labels.classes
    noisy = classes.copy()
    for c in range(ds.C):
        members = np.flatnonzero(classes == c)
        # epsilon guards products like 0.35 * 20 landing just under an integer
        count = int(np.floor(spec.target_rate * len(members) + 1e-9))
        if count == 0:
            continue
        flip = rng.choice(members, size=count, replace=False)
        shift = rng.integers(1, ds.C, size=count)
        noisy[flip] = (c + shift) % ds.C
    return labelset_from_labels(ds.n, ds.C, nodes, noisy)


def _sample_block(rng, rows: np.ndarray, cols: np.ndarray | None, p: float) -> np.ndarray:
    """Edges of one SBM block; ``cols is None`` means the diagonal block."""
    if cols is None:
        s = len(rows)
        total = s * (s - 1) // 2
    else:
        total = len(rows) * len(cols)
    m = int(rng.binomial(total, p)) if total else 0
    if m == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if cols is None:
        # draw pair indices of the strict upper triangle
        idx = rng.choice(total, size=m, replace=False) if total < 4_000_000 else _distinct(rng, total, m)
        i = (np.floor((1 + np.sqrt(1 + 8 * idx.astype(np.float64))) / 2)).astype(np.int64)
        i = np.where(i * (i - 1) // 2 > idx, i - 1, i)
        i = np.where((i + 1) * i // 2 <= idx, i + 1, i)
        j = idx - i * (i - 1) // 2
        return np.stack([rows[j], rows[i]], axis=1)
    idx = rng.choice(total, size=m, replace=False) if total < 4_000_000 else _distinct(rng, total, m)
    return np.stack([rows[idx // len(cols)], cols[idx % len(cols)]], axis=1)


def _distinct(rng, total: int, m: int) -> np.ndarray:
    out = np.zeros(0, dtype=np.int64)
    while len(out) < m:
        out = np.unique(np.concatenate([out, rng.integers(0, total, size=2 * (m - len(out)) + 16)]))
    return rng.permutation(out)[:m]


def generate_sbm(spec: SbmSpec) -> Dataset:
    """Stochastic block model graph with Gaussian class-mean features.

    Node ``i`` belongs to class ``i % C``. Each class mean is a random unit
    vector scaled by ``class_separation``; features add unit Gaussian noise.
    """
    if spec.p_intra == 0 and spec.p_inter == 0:
        raise ValueError("all edge probabilities are zero")
    rng = np.random.default_rng(spec.seed)
    labels = np.arange(spec.n) % spec.C
    blocks = [np.flatnonzero(labels == c) for c in range(spec.C)]
    parts = []
    for a in range(spec.C):
        parts.append(_sample_block(rng, blocks[a], None, spec.p_intra))
        for b in range(a + 1, spec.C):
            parts.append(_sample_block(rng, blocks[a], blocks[b], spec.p_inter))
    edges = np.concatenate(parts)
    if len(edges) == 0:
        raise ValueError("sampled graph is empty")
    u, v = edges[:, 0], edges[:, 1]
    adj = sp.csr_matrix((np.ones(2 * len(u)), (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(spec.n, spec.n))

    means = rng.standard_normal((spec.C, spec.feature_dim))
    means *= spec.class_separation / np.linalg.norm(means, axis=1, keepdims=True)
    features = means[labels] + rng.standard_normal((spec.n, spec.feature_dim))
    return make_dataset(adj, features, labels, spec.C, name=f"sbm-n{spec.n}-c{spec.C}-s{spec.seed}")
