"""Graph data model, TU-format I/O, block-diagonal batching and splitting."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Graph",
    "GraphDataset",
    "BatchedGraph",
    "TUFormatError",
    "parse_tu_dataset",
    "write_tu_dataset",
    "batch_graphs",
    "unbatch",
    "stratified_split",
    "stratified_split_indices",
]


class TUFormatError(ValueError):
    """Raised when a TU dataset directory is missing files or is malformed."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """One attributed undirected graph.

    Parameters
    ----------
    adjacency : ndarray, shape (n, n)
        Symmetric 0/1 matrix with zero diagonal.
    node_features : ndarray, shape (n, d_in)
    node_labels : ndarray of int, shape (n,), optional
        Discrete node labels, kept separately from the features so the
        propagation kernel can use a label channel.
    graph_label : int
    """

    adjacency: np.ndarray
    node_features: np.ndarray
    node_labels: np.ndarray | None = None
    graph_label: int = 0

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=np.float64)
        X = np.asarray(self.node_features, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {A.shape}")
        n = A.shape[0]
        if n < 1:
            raise ValueError("a graph needs at least one node")
        if X.shape[0] != n:
            raise ValueError(f"node_features has {X.shape[0]} rows for {n} nodes")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        if not np.all((A == 0) | (A == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        object.__setattr__(self, "adjacency", _freeze(A))
        object.__setattr__(self, "node_features", _freeze(X))
        if self.node_labels is not None:
            L = np.asarray(self.node_labels, dtype=np.int64).ravel()
            if L.shape[0] != n:
                raise ValueError("node_labels length must equal node count")
            object.__setattr__(self, "node_labels", _freeze(L))
        object.__setattr__(self, "graph_label", int(self.graph_label))

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    @property
    def d_in(self) -> int:
        return self.node_features.shape[1]

    def neighbors(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[v])

    def same_as(self, other: "Graph") -> bool:
        """Element-wise equality of every field."""
        if (self.node_labels is None) != (other.node_labels is None):
            return False
        return (
            self.graph_label == other.graph_label
            and np.array_equal(self.adjacency, other.adjacency)
            and np.array_equal(self.node_features, other.node_features)
            and (self.node_labels is None or np.array_equal(self.node_labels, other.node_labels))
        )

    @classmethod
    def from_edges(cls, n, edges, node_features=None, node_labels=None, graph_label=0):
        """Build a graph from an undirected edge list over nodes ``0..n-1``.

        Without ``node_features``, one-hot encoded ``node_labels`` are used,
        or a constant 1 column when there are no labels either.
        """
        A = np.zeros((n, n))
        for u, v in edges:
            if u != v:
                A[u, v] = A[v, u] = 1.0
        if node_features is None:
            if node_labels is not None:
                labels = np.asarray(node_labels, dtype=np.int64)
                node_features = np.eye(int(labels.max()) + 1)[labels]
            else:
                node_features = np.ones((n, 1))
        return cls(A, node_features, node_labels, graph_label)


@dataclass(frozen=True, eq=False)
class GraphDataset:
    """Ordered collection of graphs sharing a feature dimension.

    ``has_attributes`` tells whether ``node_features`` hold real node
    attributes (True) or only the one-hot encoding of node labels (False).
    """

    graphs: tuple
    name: str = "dataset"
    n_classes: int | None = None
    has_attributes: bool = True

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("dataset must contain at least one graph")
        dims = {g.d_in for g in graphs}
        if len(dims) != 1:
            raise ValueError(f"graphs have mixed feature dimensions {sorted(dims)}")
        object.__setattr__(self, "graphs", graphs)
        top = max(g.graph_label for g in graphs) + 1
        if self.n_classes is None:
            object.__setattr__(self, "n_classes", top)
        elif top > self.n_classes or min(g.graph_label for g in graphs) < 0:
            raise ValueError("graph labels must lie in [0, n_classes)")

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    def __iter__(self):
        return iter(self.graphs)

    @property
    def N(self) -> int:
        return len(self.graphs)

    @property
    def d_in(self) -> int:
        return self.graphs[0].d_in

    @property
    def C(self) -> int:
        return self.n_classes

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.graph_label for g in self.graphs], dtype=np.int64)

    @property
    def has_node_labels(self) -> bool:
        return all(g.node_labels is not None for g in self.graphs)

    def subset(self, indices, name=None) -> "GraphDataset":
        return GraphDataset(
            tuple(self.graphs[int(i)] for i in indices),
            name=name or self.name,
            n_classes=self.n_classes,
            has_attributes=self.has_attributes,
        )


@dataclass(frozen=True, eq=False)
class BatchedGraph:
    """Several graphs merged into one disconnected graph."""

    block_adjacency: sp.csr_matrix
    stacked_features: np.ndarray
    graph_index: np.ndarray
    labels: np.ndarray
    node_counts: np.ndarray = field(repr=False)
    graphs: tuple = field(default=(), repr=False)
    # derived operators (normalized adjacency, edge lists) memoized per batch
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_graphs(self) -> int:
        return len(self.node_counts)

    @property
    def num_nodes(self) -> int:
        return self.stacked_features.shape[0]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.node_counts)])


def batch_graphs(graphs: Sequence[Graph]) -> BatchedGraph:
    graphs = list(graphs)
    if not graphs:
        raise ValueError("cannot batch an empty list of graphs")
    dims = {g.d_in for g in graphs}
    if len(dims) != 1:
        raise ValueError(f"graphs have mixed feature dimensions {sorted(dims)}")
    counts = np.array([g.node_count for g in graphs], dtype=np.int64)
    block = sp.block_diag([sp.csr_matrix(g.adjacency) for g in graphs], format="csr")
    return BatchedGraph(
        block_adjacency=block,
        stacked_features=np.vstack([g.node_features for g in graphs]),
        graph_index=np.repeat(np.arange(len(graphs)), counts),
        labels=np.array([g.graph_label for g in graphs], dtype=np.int64),
        node_counts=counts,
        graphs=tuple(graphs),
    )


def unbatch(values: np.ndarray, batch: BatchedGraph) -> list:
    """Split a per-node array of a batch back into per-graph arrays."""
    off = batch.offsets
    return [values[off[b]:off[b + 1]] for b in range(batch.num_graphs)]


# --------------------------------------------------------------------------
# TU format
# --------------------------------------------------------------------------


def _read_matrix(path, dtype):
    with open(path) as fh:
        rows = [line.strip() for line in fh if line.strip()]
    if not rows:
        return np.zeros((0, 0), dtype=dtype)
    parsed = [[tok.strip() for tok in r.split(",")] for r in rows]
    widths = {len(r) for r in parsed}
    if len(widths) != 1:
        raise TUFormatError(f"ragged rows in {os.path.basename(path)}: widths {sorted(widths)}")
    try:
        return np.array(parsed, dtype=np.float64).astype(dtype)
    except ValueError as exc:
        raise TUFormatError(f"non-numeric entry in {os.path.basename(path)}: {exc}") from None


def parse_tu_dataset(directory, name: str) -> GraphDataset:
    """Read a dataset in the TU text format.

    Node ids in ``{name}_A.txt`` are 1-based and global. Edges are symmetrized
    and deduplicated, self loops dropped, and graph labels remapped to
    ``0..C-1`` in sorted order. Node labels (when present) are remapped the
    same way. Node attributes, when present, become the node features;
    otherwise the one-hot node labels do.
    """
    directory = os.fspath(directory)
    base = os.path.join(directory, name)

    def path(suffix, required=True):
        p = f"{base}_{suffix}.txt"
        if required and not os.path.exists(p):
            raise TUFormatError(f"missing mandatory file {p}")
        return p if os.path.exists(p) else None

    indicator = _read_matrix(path("graph_indicator"), np.int64).ravel()
    graph_labels_raw = _read_matrix(path("graph_labels"), np.int64).ravel()
    edges = _read_matrix(path("A"), np.int64)
    attr_path = path("node_attributes", required=False)
    nlab_path = path("node_labels", required=False)
    if attr_path is None and nlab_path is None:
        raise TUFormatError(f"{name}: need node_attributes or node_labels")

    n_total = indicator.shape[0]
    n_graphs = graph_labels_raw.shape[0]
    if n_total == 0:
        raise TUFormatError(f"{name}: empty graph indicator")
    if indicator.min() < 1 or indicator.max() > n_graphs:
        raise TUFormatError(f"{name}: graph indicator references graphs outside 1..{n_graphs}")
    if np.any(np.diff(indicator) < 0):
        raise TUFormatError(f"{name}: graph indicator must be non-decreasing")
    counts = np.bincount(indicator - 1, minlength=n_graphs)
    if np.any(counts == 0):
        raise TUFormatError(f"{name}: graph {int(np.argmin(counts)) + 1} has zero nodes")
    offsets = np.concatenate([[0], np.cumsum(counts)])

    attrs = None
    if attr_path is not None:
        attrs = _read_matrix(attr_path, np.float64)
        if attrs.ndim == 2 and attrs.shape[0] != n_total:
            raise TUFormatError(f"{name}: {attrs.shape[0]} attribute rows for {n_total} nodes")
    node_labels = None
    if nlab_path is not None:
        nl = _read_matrix(nlab_path, np.int64)
        if nl.shape[0] != n_total:
            raise TUFormatError(f"{name}: {nl.shape[0]} node labels for {n_total} nodes")
        # multi-column label files: the first column is the node label
        _, node_labels = np.unique(nl[:, 0], return_inverse=True)
    if attrs is not None:
        features = attrs
    else:
        features = np.eye(int(node_labels.max()) + 1)[node_labels]

    _, glabels = np.unique(graph_labels_raw, return_inverse=True)
    n_classes = int(glabels.max()) + 1

    adjacency = [np.zeros((c, c)) for c in counts]
    if edges.size:
        if edges.shape[1] != 2:
            raise TUFormatError(f"{name}_A.txt must have two columns")
        if edges.min() < 1 or edges.max() > n_total:
            raise TUFormatError(f"{name}: node id out of range 1..{n_total}")
        src, dst = edges[:, 0] - 1, edges[:, 1] - 1
        gs, gd = indicator[src] - 1, indicator[dst] - 1
        if np.any(gs != gd):
            raise TUFormatError(f"{name}: edge joins nodes of different graphs")
        for g, u, v in zip(gs, src - offsets[gs], dst - offsets[gs]):
            if u != v:
                adjacency[g][u, v] = adjacency[g][v, u] = 1.0

    graphs = []
    for g in range(n_graphs):
        lo, hi = offsets[g], offsets[g + 1]
        graphs.append(Graph(
            adjacency[g],
            features[lo:hi],
            None if node_labels is None else node_labels[lo:hi],
            int(glabels[g]),
        ))
    return GraphDataset(tuple(graphs), name=name, n_classes=n_classes,
                        has_attributes=attrs is not None)


def write_tu_dataset(dataset: GraphDataset, directory, name: str | None = None) -> None:
    """Write ``dataset`` in the TU text format (edges listed in both directions)."""
    name = name or dataset.name
    os.makedirs(directory, exist_ok=True)
    base = os.path.join(os.fspath(directory), name)
    offset = 0
    with open(f"{base}_A.txt", "w") as fa, open(f"{base}_graph_indicator.txt", "w") as fi:
        for gi, g in enumerate(dataset.graphs, start=1):
            for u, v in zip(*np.nonzero(g.adjacency)):
                fa.write(f"{u + offset + 1}, {v + offset + 1}\n")
            fi.write(f"{gi}\n" * g.node_count)
            offset += g.node_count
    with open(f"{base}_graph_labels.txt", "w") as fh:
        fh.writelines(f"{g.graph_label}\n" for g in dataset.graphs)
    if dataset.has_node_labels:
        with open(f"{base}_node_labels.txt", "w") as fh:
            for g in dataset.graphs:
                fh.writelines(f"{int(l)}\n" for l in g.node_labels)
    if dataset.has_attributes:
        with open(f"{base}_node_attributes.txt", "w") as fh:
            for g in dataset.graphs:
                for row in g.node_features:
                    fh.write(", ".join(repr(float(x)) for x in row) + "\n")


# --------------------------------------------------------------------------
# splitting
# --------------------------------------------------------------------------


def stratified_split_indices(labels, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Per-class shuffled split of ``labels`` into index arrays.

    Each class contributes ``round(ratio * n_c)`` members to every split but
    the last, which takes the remainder, so per-class proportions match the
    global ones to within one graph.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    if np.any(ratios <= 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {tuple(ratios)}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = [[] for _ in ratios]
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if len(members) < len(ratios):
            raise ValueError(f"class {c} has {len(members)} samples, fewer than {len(ratios)} splits")
        members = rng.permutation(members)
        sizes = [max(1, int(round(r * len(members)))) for r in ratios[:-1]]
        while sum(sizes) > len(members) - 1:
            sizes[int(np.argmax(sizes))] -= 1
        cuts = np.cumsum(sizes)
        for part, chunk in zip(parts, np.split(members, cuts)):
            part.extend(chunk.tolist())
    return tuple(np.sort(np.array(p, dtype=np.int64)) for p in parts)


def stratified_split(dataset: GraphDataset, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Split ``dataset`` into stratified train/validation/test datasets."""
    idx = stratified_split_indices(dataset.labels, ratios, seed)
    return tuple(dataset.subset(i) for i in idx)
