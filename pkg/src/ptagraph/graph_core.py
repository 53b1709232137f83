"""Graph and label containers, adjacency normalization and dataset splits.

Sparse matrices are plain :class:`scipy.sparse.csr_matrix` objects kept in
canonical form (sorted column indices, no duplicates, no stored zeros).
:func:`as_csr` is the single entry point that enforces this.

A dataset bundle on disk is a directory with four files::

    meta.json      {"num_nodes": n, "num_features": f, "num_classes": C}
    edges.tsv      u<TAB>v[<TAB>weight]   one line per undirected edge
    features.tsv   node<TAB>feature<TAB>value   sparse triplets
    labels.tsv     node<TAB>class   one line per node
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DatasetFormatError",
    "Normalization",
    "Dataset",
    "LabelSet",
    "Split",
    "as_csr",
    "normalize_adjacency",
    "load_dataset",
    "save_dataset",
    "make_split",
    "labelset_from_split",
    "labelset_from_labels",
]


class DatasetFormatError(ValueError):
    """Raised when a dataset bundle is missing files or has invalid content."""


class Normalization(str, enum.Enum):
    SYM_SELFLOOP = "sym_selfloop"  # D~^-1/2 (A + I) D~^-1/2
    SYM = "sym"  # D^-1/2 A D^-1/2
    ROW = "row"  # D^-1 A


def as_csr(matrix) -> sp.csr_matrix:
    """Return a canonical float64 CSR copy of ``matrix``.

    Canonical means sorted column indices within each row, summed duplicates
    and no explicitly stored zeros.
    """
    out = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _freeze_csr(mat: sp.csr_matrix) -> sp.csr_matrix:
    for arr in (mat.data, mat.indices, mat.indptr):
        arr.setflags(write=False)
    return mat


@dataclass(frozen=True)
class Dataset:
    """An attributed, fully labeled, undirected graph.

    ``adjacency`` is symmetric with an empty diagonal. ``features`` is a dense
    ``(n, f)`` array, or a CSR matrix when loaded with ``sparse_features``.
    """

    adjacency: sp.csr_matrix
    features: np.ndarray | sp.csr_matrix
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        n = self.adjacency.shape[0]
        if self.adjacency.shape != (n, n):
            raise ValueError(f"adjacency must be square, got {self.adjacency.shape}")
        if self.features.shape[0] != n or self.labels.shape != (n,):
            raise ValueError("features/labels row count does not match adjacency")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def f(self) -> int:
        return self.features.shape[1]

    @property
    def C(self) -> int:
        return self.num_classes

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.adjacency.nnz // 2

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an ``(m, 2)`` array with ``u < v``, sorted."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        edges = np.stack([upper.row, upper.col], axis=1).astype(np.int64)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        return edges[order]


def make_dataset(adjacency, features, labels, num_classes: int, name: str = "dataset") -> Dataset:
    """Build a frozen :class:`Dataset`, canonicalizing the inputs."""
    adj = as_csr(adjacency)
    if sp.issparse(features):
        feats = _freeze_csr(as_csr(features))
    else:
        feats = _freeze(np.array(features, dtype=np.float64, copy=True))
    labs = _freeze(np.array(labels, dtype=np.int64, copy=True))
    return Dataset(_freeze_csr(adj), feats, labs, int(num_classes), name)


@dataclass(frozen=True)
class LabelSet:
    """Observed labels: the labeled node set, its one-hot matrix and h(i)."""

    labeled_nodes: np.ndarray
    onehot: np.ndarray
    label_of: dict[int, int] = field(repr=False)

    @property
    def classes(self) -> np.ndarray:
        """Class id of each labeled node, aligned with ``labeled_nodes``."""
        return np.array([self.label_of[int(i)] for i in self.labeled_nodes], dtype=np.int64)


def labelset_from_labels(n: int, num_classes: int, nodes, classes) -> LabelSet:
    nodes = np.asarray(nodes, dtype=np.int64)
    classes = np.asarray(classes, dtype=np.int64)
    if nodes.shape != classes.shape:
        raise ValueError("nodes and classes must have equal length")
    if len(np.unique(nodes)) != len(nodes):
        raise ValueError("labeled nodes must be distinct")
    onehot = np.zeros((n, num_classes))
    onehot[nodes, classes] = 1.0
    label_of = {int(i): int(c) for i, c in zip(nodes, classes)}
    return LabelSet(_freeze(nodes.copy()), _freeze(onehot), label_of)


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    early_stop: np.ndarray
    test: np.ndarray
    seed: int


def _degrees(adj: sp.csr_matrix) -> np.ndarray:
    return np.asarray(adj.sum(axis=1)).ravel()


def normalize_adjacency(adj, strategy: Normalization | str = Normalization.SYM_SELFLOOP) -> sp.csr_matrix:
    """Normalize a symmetric, nonnegative adjacency matrix.

    Parameters
    ----------
    adj : sparse matrix
        Symmetric adjacency with zero diagonal.
    strategy : Normalization or str
        ``sym_selfloop`` adds unit self-loops before symmetric scaling, ``sym``
        scales symmetrically, ``row`` divides each row by its degree.

    Returns
    -------
    scipy.sparse.csr_matrix
        The normalized matrix, same pattern as ``adj`` (plus the diagonal for
        ``sym_selfloop``).

    Raises
    ------
    ValueError
        If a node has degree 0 under ``sym`` or ``row``.
    """
    strategy = Normalization(strategy)
    a = as_csr(adj)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"adjacency must be square, got {a.shape}")
    if a.nnz and a.data.min() < 0:
        raise ValueError("adjacency must be nonnegative")
    if a.diagonal().any():
        raise ValueError("adjacency must have an empty diagonal")

    if strategy is Normalization.SYM_SELFLOOP:
        a = as_csr(a + sp.identity(n, format="csr"))
    deg = _degrees(a)
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        raise ValueError(
            f"node {int(isolated[0])} has degree 0; '{strategy.value}' normalization is undefined"
        )

    coo = a.tocoo()
    if strategy is Normalization.ROW:
        values = coo.data / deg[coo.row]
    else:
        # mirrored entries get the same product so the output is exactly symmetric
        lo = np.minimum(coo.row, coo.col)
        hi = np.maximum(coo.row, coo.col)
        values = coo.data / np.sqrt(deg[lo] * deg[hi])
    return as_csr(sp.csr_matrix((values, (coo.row, coo.col)), shape=a.shape))


def _read_tsv(path: Path, ncols: tuple[int, ...]) -> list[list[str]]:
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in ncols:
                raise DatasetFormatError(f"{path.name}:{lineno}: expected {ncols} columns, got {len(parts)}")
            rows.append(parts)
    return rows


def _check_range(values: np.ndarray, upper: int, what: str, fname: str):
    bad = np.flatnonzero((values < 0) | (values >= upper))
    if bad.size:
        raise DatasetFormatError(f"{fname}: {what} {int(values[bad[0]])} out of range [0, {upper})")


def load_dataset(path, sparse_features: bool = False) -> Dataset:
    """Load a dataset bundle directory.

    Each undirected edge must appear once in ``edges.tsv``; it is stored in
    both directions. Missing feature triplets are zero.
    """
    root = Path(path)
    files = {name: root / name for name in ("meta.json", "edges.tsv", "features.tsv", "labels.tsv")}
    for name, fpath in files.items():
        if not fpath.is_file():
            raise DatasetFormatError(f"missing {name} in {root}")

    meta = json.loads(files["meta.json"].read_text())
    try:
        n = int(meta["num_nodes"])
        f = int(meta["num_features"])
        C = int(meta["num_classes"])
    except KeyError as exc:
        raise DatasetFormatError(f"meta.json lacks field {exc}") from None

    rows = _read_tsv(files["edges.tsv"], (2, 3))
    if rows:
        uv = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64)
        w = np.array([float(r[2]) if len(r) == 3 else 1.0 for r in rows])
    else:
        uv = np.zeros((0, 2), dtype=np.int64)
        w = np.zeros(0)
    _check_range(uv.ravel(), n, "node", "edges.tsv")
    loops = np.flatnonzero(uv[:, 0] == uv[:, 1])
    if loops.size:
        raise DatasetFormatError(f"edges.tsv: self-loop on node {int(uv[loops[0], 0])}")
    lo, hi = np.minimum(uv[:, 0], uv[:, 1]), np.maximum(uv[:, 0], uv[:, 1])
    keys = lo * n + hi
    uniq, counts = np.unique(keys, return_counts=True)
    if (counts > 1).any():
        dup = int(uniq[np.argmax(counts > 1)])
        raise DatasetFormatError(f"edges.tsv: duplicate edge ({dup // n}, {dup % n})")
    adj = sp.csr_matrix(
        (np.concatenate([w, w]), (np.concatenate([lo, hi]), np.concatenate([hi, lo]))), shape=(n, n)
    )

    rows = _read_tsv(files["features.tsv"], (3,))
    if rows:
        idx = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64)
        val = np.array([float(r[2]) for r in rows])
    else:
        idx = np.zeros((0, 2), dtype=np.int64)
        val = np.zeros(0)
    _check_range(idx[:, 0], n, "node", "features.tsv")
    _check_range(idx[:, 1], f, "feature index", "features.tsv")
    feats = sp.csr_matrix((val, (idx[:, 0], idx[:, 1])), shape=(n, f))
    if not sparse_features:
        feats = feats.toarray()

    rows = _read_tsv(files["labels.tsv"], (2,))
    lab = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
    _check_range(lab[:, 0], n, "node", "labels.tsv")
    _check_range(lab[:, 1], C, "class", "labels.tsv")
    labels = np.full(n, -1, dtype=np.int64)
    labels[lab[:, 0]] = lab[:, 1]
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise DatasetFormatError(f"labels.tsv: node {int(missing[0])} has no label")

    return make_dataset(adj, feats, labels, C, name=root.name)


def save_dataset(ds: Dataset, path) -> Path:
    """Write ``ds`` as a bundle directory readable by :func:`load_dataset`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"num_nodes": ds.n, "num_features": ds.f, "num_classes": ds.C}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    upper = sp.triu(ds.adjacency, k=1).tocoo()
    with (root / "edges.tsv").open("w") as fh:
        for u, v, w in zip(upper.row, upper.col, upper.data):
            fh.write(f"{u}\t{v}\n" if w == 1.0 else f"{u}\t{v}\t{float(w)!r}\n")

    feats = sp.coo_matrix(ds.features)
    order = np.lexsort((feats.col, feats.row))
    with (root / "features.tsv").open("w") as fh:
        for k in order:
            fh.write(f"{feats.row[k]}\t{feats.col[k]}\t{float(feats.data[k])!r}\n")

    with (root / "labels.tsv").open("w") as fh:
        for i, c in enumerate(ds.labels):
            fh.write(f"{i}\t{c}\n")
    return root


def make_split(ds: Dataset, per_class: int = 20, early_stop_size: int = 500, seed: int = 0) -> Split:
    """Sample a train / early-stopping / test split.

    ``per_class`` training nodes are drawn uniformly from every class,
    ``early_stop_size`` nodes from the rest, and all remaining nodes form the
    test set. Index arrays are sorted.
    """
    if per_class * ds.C + early_stop_size >= ds.n:
        raise ValueError(
            f"per_class*C + early_stop_size = {per_class * ds.C + early_stop_size} must be < n = {ds.n}"
        )
    rng = np.random.default_rng(seed)
    train = []
    for c in range(ds.C):
        members = np.flatnonzero(ds.labels == c)
        if members.size < per_class:
            raise ValueError(f"class {c} has {members.size} nodes, fewer than per_class={per_class}")
        train.append(rng.choice(members, size=per_class, replace=False))
    train = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    rest = np.setdiff1d(np.arange(ds.n), train)
    early = np.sort(rng.choice(rest, size=early_stop_size, replace=False))
    test = np.setdiff1d(rest, early)
    return Split(_freeze(train), _freeze(early), _freeze(test), int(seed))


def labelset_from_split(ds: Dataset, split: Split, which: str = "train") -> LabelSet:
    if which != "train":
        raise ValueError("only the training set carries observed labels")
    nodes = split.train
    return labelset_from_labels(ds.n, ds.C, nodes, ds.labels[nodes])
