"""Small synthetic graph collections for tests and demos."""

from __future__ import annotations

import numpy as np

from .graph import Graph, GraphDataset

__all__ = ["random_graph", "motif_dataset", "separable_motifs", "density_families"]


def random_graph(rng, n_min=1, n_max=6, p=0.4, n_labels=3, d_attr=0, graph_label=0) -> Graph:
    """Erdos-Renyi graph with random node labels and optional Gaussian attributes."""
    n = int(rng.integers(n_min, n_max + 1))
    upper = np.triu(rng.random((n, n)) < p, 1)
    A = (upper | upper.T).astype(float)
    labels = rng.integers(0, n_labels, size=n) if n_labels else None
    if d_attr:
        X = rng.standard_normal((n, d_attr))
    elif labels is not None:
        X = np.eye(n_labels)[labels]
    else:
        X = np.ones((n, 1))
    return Graph(A, X, labels, graph_label)


def _ring_with_clique(rng, n):
    edges = [(i, (i + 1) % n) for i in range(n)]
    clique = rng.choice(n, size=4, replace=False)
    edges += [(int(a), int(b)) for i, a in enumerate(clique) for b in clique[i + 1:]]
    return edges


def _random_tree(rng, n):
    return [(i, int(rng.integers(0, i))) for i in range(1, n)]


def motif_dataset(n_graphs=40, seed=0, n_min=8, n_max=12, n_labels=3) -> GraphDataset:
    """Two balanced classes: rings carrying a 4-clique (label 0) and random
    trees (label 1). Node labels are uniform noise, so only structure
    separates the classes."""
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(n_graphs):
        cls = i % 2
        n = int(rng.integers(n_min, n_max + 1))
        edges = _ring_with_clique(rng, n) if cls == 0 else _random_tree(rng, n)
        labels = rng.integers(0, n_labels, size=n)
        graphs.append(Graph.from_edges(n, edges, np.eye(n_labels)[labels], labels, cls))
    return GraphDataset(tuple(graphs), name="motifs", n_classes=2, has_attributes=False)


def separable_motifs(n_graphs=40, seed=0, n_min=8, n_max=12, max_degree=5) -> GraphDataset:
    """The two motif families of :func:`motif_dataset` with node labels set
    to the (capped) node degree and one-hot degree features.

    Trees always contain degree-1 nodes and ring graphs never do, so the sum
    readout of the raw features already separates the classes linearly.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(n_graphs):
        cls = i % 2
        n = int(rng.integers(n_min, n_max + 1))
        edges = _ring_with_clique(rng, n) if cls == 0 else _random_tree(rng, n)
        g = Graph.from_edges(n, edges)
        labels = np.minimum(g.adjacency.sum(axis=1).astype(int), max_degree)
        graphs.append(Graph(g.adjacency, np.eye(max_degree + 1)[labels], labels, cls))
    return GraphDataset(tuple(graphs), name="separable_motifs", n_classes=2, has_attributes=False)


def density_families(n_per_family=3, seed=0, n=8) -> GraphDataset:
    """Complete graphs (label 0) and paths (label 1) of similar size. Node
    labels alternate 0/1 along the node order, so after one propagation step
    path nodes see pure opposite-label neighbourhoods while clique nodes see
    a near even mix."""
    rng = np.random.default_rng(seed)
    graphs = []
    for fam in range(2):
        for _ in range(n_per_family):
            m = n + int(rng.integers(0, 2))
            if fam == 0:
                edges = [(a, b) for a in range(m) for b in range(a + 1, m)]
            else:
                edges = [(a, a + 1) for a in range(m - 1)]
            labels = np.arange(m) % 2
            graphs.append(Graph.from_edges(m, edges, np.eye(2)[labels], labels, fam))
    return GraphDataset(tuple(graphs), name="density", n_classes=2, has_attributes=False)
