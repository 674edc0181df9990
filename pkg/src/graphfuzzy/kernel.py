"""Propagation kernel between attributed graphs.

Node states are propagated with the row-normalized adjacency. At every
iteration ``t = 1..t_max`` two graphs are compared by summing a node kernel
over all node pairs; the per-iteration sums are accumulated into one value.

Two node kernels are available:

``hashed``
    Locality-sensitive binning: a node state ``p`` is mapped to
    ``floor((r . p + b) / w)`` with a random direction ``r`` and offset ``b``
    drawn from ``(seed, t, channel)``. Two nodes match (kernel 1) when their
    bins agree, so every iteration reduces to counting bucket collisions.
``rbf``
    ``exp(-gamma * ||p_u - p_v||^2)``, exact and hash free.

When a dataset has both discrete node labels and real attributes the node
kernel is the product of the label- and attribute-channel kernels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graph import Graph, GraphDataset

__all__ = [
    "KernelConfig",
    "NodeEncoder",
    "PropagationState",
    "KernelCache",
    "transition_matrix",
    "propagate",
    "hash_params",
    "node_kernel",
    "graph_pair_kernel",
    "cross_kernel",
    "self_kernels",
    "kernel_matrix",
    "save_kernel_cache",
    "load_kernel_cache",
]

SCHEMES = ("hashed", "rbf")
_CHANNEL_ID = {"label": 0, "attribute": 1}


@dataclass(frozen=True)
class KernelConfig:
    """Propagation-kernel settings.

    ``rbf_bandwidth=None`` uses ``1 / dim`` for each channel.
    """

    t_max: int = 5
    scheme: str = "hashed"
    label_bin_width: float = 1e-3
    attr_bin_width: float = 1.0
    rbf_bandwidth: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown kernel scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.label_bin_width <= 0 or self.attr_bin_width <= 0:
            raise ValueError("hash bin widths must be positive")
        if self.rbf_bandwidth is not None and self.rbf_bandwidth <= 0:
            raise ValueError("rbf bandwidth must be positive")

    def bin_width(self, channel: str) -> float:
        return self.label_bin_width if channel == "label" else self.attr_bin_width

    def bandwidth(self, channel: str, dim: int) -> float:
        return self.rbf_bandwidth if self.rbf_bandwidth is not None else 1.0 / dim


@dataclass(frozen=True, eq=False)
class NodeEncoder:
    """Channel conventions shared by every graph compared under one kernel.

    ``n_labels`` is the label alphabet size (``None`` disables the label
    channel); ``attr_mean``/``attr_scale`` standardize node attributes
    (``None`` disables the attribute channel).
    """

    n_labels: int | None = None
    attr_mean: np.ndarray | None = None
    attr_scale: np.ndarray | None = None

    def __post_init__(self):
        if self.n_labels is None and self.attr_mean is None:
            raise ValueError("at least one of the label and attribute channels is required")

    @property
    def channels(self) -> tuple:
        out = []
        if self.n_labels is not None:
            out.append("label")
        if self.attr_mean is not None:
            out.append("attribute")
        return tuple(out)

    @classmethod
    def fit(cls, dataset: GraphDataset) -> "NodeEncoder":
        """Use every channel the dataset provides; standardize attributes."""
        n_labels = None
        if dataset.has_node_labels:
            n_labels = int(max(g.node_labels.max() for g in dataset.graphs)) + 1
        mean = scale = None
        if dataset.has_attributes or n_labels is None:
            X = np.vstack([g.node_features for g in dataset.graphs])
            mean = X.mean(axis=0)
            scale = X.std(axis=0)
            scale[scale == 0] = 1.0
        return cls(n_labels, mean, scale)

    @classmethod
    def for_graphs(cls, graphs: Sequence[Graph]) -> "NodeEncoder":
        """Encoder used when no dataset is at hand: labels if every graph has
        them, otherwise the unstandardized node features."""
        if all(g.node_labels is not None for g in graphs):
            return cls(n_labels=int(max(g.node_labels.max() for g in graphs)) + 1)
        d = graphs[0].d_in
        return cls(attr_mean=np.zeros(d), attr_scale=np.ones(d))

    def initial(self, graph: Graph) -> dict:
        """Iteration-0 node states per channel."""
        out = {}
        if self.n_labels is not None:
            if graph.node_labels is None:
                raise ValueError("graph has no node labels but the label channel is enabled")
            if graph.node_labels.max() >= self.n_labels:
                raise ValueError(f"node label {graph.node_labels.max()} outside alphabet of {self.n_labels}")
            out["label"] = np.eye(self.n_labels)[graph.node_labels]
        if self.attr_mean is not None:
            if graph.d_in != self.attr_mean.shape[0]:
                raise ValueError(f"graph has {graph.d_in} features, encoder expects {self.attr_mean.shape[0]}")
            out["attribute"] = (graph.node_features - self.attr_mean) / self.attr_scale
        return out

    def to_arrays(self) -> dict:
        out = {"encoder.n_labels": np.array([-1 if self.n_labels is None else self.n_labels], dtype=np.float64)}
        if self.attr_mean is not None:
            out["encoder.attr_mean"] = self.attr_mean
            out["encoder.attr_scale"] = self.attr_scale
        return out

    @classmethod
    def from_arrays(cls, arrays: dict) -> "NodeEncoder":
        n = int(arrays["encoder.n_labels"][0])
        return cls(None if n < 0 else n,
                   arrays.get("encoder.attr_mean"), arrays.get("encoder.attr_scale"))


@dataclass(frozen=True, eq=False)
class PropagationState:
    """Node states of every channel after ``t`` propagation steps."""

    t: int
    distributions: dict

    def __getitem__(self, channel):
        return self.distributions[channel]


def transition_matrix(adjacency: np.ndarray) -> np.ndarray:
    """Row-normalized adjacency; isolated nodes keep their own state."""
    A = np.asarray(adjacency, dtype=np.float64)
    deg = A.sum(axis=1)
    T = np.divide(A, deg[:, None], out=np.zeros_like(A), where=deg[:, None] > 0)
    iso = deg == 0
    T[iso, iso] = 1.0
    return T


def propagate(graph: Graph, config: KernelConfig, encoder: NodeEncoder | None = None) -> list:
    """States for ``t = 0..t_max``."""
    encoder = encoder or NodeEncoder.for_graphs([graph])
    T = transition_matrix(graph.adjacency)
    p = encoder.initial(graph)
    states = [PropagationState(0, p)]
    for t in range(1, config.t_max + 1):
        p = {ch: T @ v for ch, v in p.items()}
        states.append(PropagationState(t, p))
    return states


def hash_params(config: KernelConfig, t: int, channel: str, dim: int):
    """Random direction, offset and bin width for one iteration and channel.

    Derived from ``(seed, t, channel)`` only, so hashes never depend on the
    order in which graphs are processed.
    """
    rng = np.random.default_rng([config.seed, t, _CHANNEL_ID[channel]])
    w = config.bin_width(channel)
    r = rng.standard_normal(dim)
    b = rng.uniform(0.0, w)
    return r, b, w


def _hash(p: np.ndarray, r, b, w) -> np.ndarray:
    return np.floor((p @ r + b) / w).astype(np.int64)


def _as_channels(p, channel):
    if isinstance(p, dict):
        return p
    if isinstance(p, tuple):
        out = {}
        if p[0] is not None:
            out["label"] = np.asarray(p[0], dtype=np.float64)
        if p[1] is not None:
            out["attribute"] = np.asarray(p[1], dtype=np.float64)
        return out
    return {channel: np.asarray(p, dtype=np.float64)}


def node_kernel(p_u, p_v, config: KernelConfig, t: int = 1, channel: str = "attribute") -> float:
    """Kernel between two node states of the same iteration.

    ``p_u``/``p_v`` are either single-channel rows (``channel`` names which)
    or ``(label_row, attribute_row)`` tuples with ``None`` for an absent
    channel. With two channels the result is the product of both.
    """
    u, v = _as_channels(p_u, channel), _as_channels(p_v, channel)
    if u.keys() != v.keys():
        raise ValueError("node states come from different channels")
    k = 1.0
    for ch in u:
        a, c = u[ch], v[ch]
        if a.shape != c.shape:
            raise ValueError(f"dimension mismatch {a.shape} vs {c.shape}")
        if config.scheme == "hashed":
            r, b, w = hash_params(config, t, ch, a.shape[0])
            k *= float(_hash(a[None], r, b, w)[0] == _hash(c[None], r, b, w)[0])
        else:
            k *= float(np.exp(-config.bandwidth(ch, a.shape[0]) * np.sum((a - c) ** 2)))
    return k


# --------------------------------------------------------------------------
# graph-level kernels
# --------------------------------------------------------------------------


def _graph_states(graphs, config, encoder):
    return [propagate(g, config, encoder) for g in graphs]


def _bucket_keys(states, config) -> np.ndarray:
    """Per-node bucket keys (one column per channel) for one iteration."""
    cols = []
    for ch, p in sorted(states.distributions.items()):
        r, b, w = hash_params(config, states.t, ch, p.shape[1])
        cols.append(_hash(p, r, b, w))
    return np.stack(cols, axis=1)


def _count_maps(states_a, states_b, t, config):
    """Sparse bucket-count feature maps of iteration ``t`` for two graph lists."""
    keys = [_bucket_keys(s[t], config) for s in states_a] + [_bucket_keys(s[t], config) for s in states_b]
    sizes = np.array([k.shape[0] for k in keys])
    _, bucket = np.unique(np.vstack(keys), axis=0, return_inverse=True)
    bucket = bucket.ravel()
    owner = np.repeat(np.arange(len(keys)), sizes)
    phi = sp.csr_matrix((np.ones_like(bucket, dtype=np.float64), (owner, bucket)),
                        shape=(len(keys), int(bucket.max()) + 1))
    phi.sum_duplicates()
    na = len(states_a)
    return phi[:na], phi[na:]


def _rbf_iteration(states_a, states_b, t, config, chunk=2048):
    """Sum of node rbf kernels between every graph pair for iteration ``t``."""
    def stack(states):
        chans = sorted(states[0][t].distributions)
        P = {ch: np.vstack([s[t][ch] for s in states]) for ch in chans}
        owner = np.repeat(np.arange(len(states)), [s[t][chans[0]].shape[0] for s in states])
        S = sp.csr_matrix((np.ones(owner.size), (owner, np.arange(owner.size))),
                          shape=(len(states), owner.size))
        return P, S

    Pa, Sa = stack(states_a)
    Pb, Sb = stack(states_b)
    out = np.zeros((len(states_a), len(states_b)))
    n_a = Sa.shape[1]
    for lo in range(0, n_a, chunk):
        hi = min(lo + chunk, n_a)
        logk = np.zeros((hi - lo, Sb.shape[1]))
        for ch in Pa:
            A, B = Pa[ch][lo:hi], Pb[ch]
            d2 = (A ** 2).sum(1)[:, None] + (B ** 2).sum(1)[None, :] - 2.0 * A @ B.T
            np.maximum(d2, 0.0, out=d2)
            logk -= config.bandwidth(ch, A.shape[1]) * d2
        out += Sa[:, lo:hi] @ (Sb @ np.exp(logk).T).T
    return out


def cross_kernel(graphs_a: Sequence[Graph], graphs_b: Sequence[Graph], config: KernelConfig,
                 encoder: NodeEncoder | None = None) -> np.ndarray:
    """Accumulated kernel values between every graph of ``graphs_a`` and ``graphs_b``."""
    graphs_a, graphs_b = list(graphs_a), list(graphs_b)
    encoder = encoder or NodeEncoder.for_graphs(graphs_a + graphs_b)
    sa = _graph_states(graphs_a, config, encoder)
    sb = _graph_states(graphs_b, config, encoder)
    out = np.zeros((len(graphs_a), len(graphs_b)))
    for t in range(1, config.t_max + 1):
        if config.scheme == "hashed":
            pa, pb = _count_maps(sa, sb, t, config)
            out += (pa @ pb.T).toarray()
        else:
            out += _rbf_iteration(sa, sb, t, config)
    return out


def self_kernels(graphs: Sequence[Graph], config: KernelConfig,
                 encoder: NodeEncoder | None = None) -> np.ndarray:
    """``K(G, G)`` for each graph."""
    graphs = list(graphs)
    encoder = encoder or NodeEncoder.for_graphs(graphs)
    if config.scheme != "hashed":
        return np.array([cross_kernel([g], [g], config, encoder)[0, 0] for g in graphs])
    states = _graph_states(graphs, config, encoder)
    out = np.zeros(len(graphs))
    for t in range(1, config.t_max + 1):
        phi, _ = _count_maps(states, [], t, config)
        out += np.asarray(phi.multiply(phi).sum(axis=1)).ravel()
    return out


def graph_pair_kernel(G_i: Graph, G_j: Graph, config: KernelConfig,
                      encoder: NodeEncoder | None = None) -> float:
    """Propagation kernel between two graphs, summed over ``t = 1..t_max``."""
    encoder = encoder or NodeEncoder.for_graphs([G_i, G_j])
    return float(cross_kernel([G_i], [G_j], config, encoder)[0, 0])


@dataclass(frozen=True, eq=False)
class KernelCache:
    """Gram matrix of a dataset and its cosine-normalized form."""

    raw: np.ndarray
    scheme: str = "hashed"
    seed: int = 0
    t_max: int = 5

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
            raise ValueError("kernel matrix must be square")
        if np.any(np.diag(raw) <= 0):
            bad = int(np.flatnonzero(np.diag(raw) <= 0)[0])
            raise ValueError(f"non-positive self kernel at index {bad}; degenerate kernel configuration")
        object.__setattr__(self, "raw", raw)

    @property
    def N(self) -> int:
        return self.raw.shape[0]

    @property
    def normalized(self) -> np.ndarray:
        d = np.diag(self.raw)
        # sqrt of the product keeps the diagonal at exactly 1
        return self.raw / np.sqrt(np.outer(d, d))


def kernel_matrix(dataset: GraphDataset | Sequence[Graph], config: KernelConfig,
                  encoder: NodeEncoder | None = None) -> KernelCache:
    """Gram matrix of a dataset under ``config``."""
    graphs = list(dataset.graphs if isinstance(dataset, GraphDataset) else dataset)
    if encoder is None:
        encoder = NodeEncoder.fit(dataset) if isinstance(dataset, GraphDataset) else NodeEncoder.for_graphs(graphs)
    states = _graph_states(graphs, config, encoder)
    raw = np.zeros((len(graphs), len(graphs)))
    for t in range(1, config.t_max + 1):
        if config.scheme == "hashed":
            phi, _ = _count_maps(states, [], t, config)
            raw += (phi @ phi.T).toarray()
        else:
            raw += _rbf_iteration(states, states, t, config)
    # floating-point sums over node pairs are not exactly symmetric for rbf
    upper = np.triu(raw)
    raw = upper + np.triu(raw, 1).T
    return KernelCache(raw, config.scheme, config.seed, config.t_max)


# --------------------------------------------------------------------------
# binary cache file: header then the row-major lower triangle as float64
# --------------------------------------------------------------------------

_MAGIC = b"GFSKERN1"
_HEADER = struct.Struct("<8sQBqI")


def save_kernel_cache(cache: KernelCache, path) -> None:
    tri = cache.raw[np.tril_indices(cache.N)]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, cache.N, SCHEMES.index(cache.scheme), cache.seed, cache.t_max))
        fh.write(tri.astype("<f8").tobytes())


def load_kernel_cache(path) -> KernelCache:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated kernel cache header")
        magic, n, scheme, seed, t_max = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a kernel cache file")
        body = np.frombuffer(fh.read(), dtype="<f8")
    if body.size != n * (n + 1) // 2:
        raise ValueError(f"{path}: expected {n * (n + 1) // 2} entries, found {body.size}")
    raw = np.zeros((n, n))
    raw[np.tril_indices(n)] = body
    raw = raw + np.tril(raw, -1).T
    return KernelCache(raw, SCHEMES[scheme], seed, t_max)
