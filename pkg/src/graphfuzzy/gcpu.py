"""Graph consequent processing units and the fused fuzzy decision function.

A unit runs three message-passing layers (GCN, single-head GAT or GraphSAGE
with GCN aggregation), sums node features per graph, and maps the result
through a three-layer MLP to one logit per class. The model output is the
firing-strength-weighted sum of the per-rule logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .antecedent import RuleBase, normalize_firing
from .graph import BatchedGraph

__all__ = [
    "VARIANTS",
    "GcpuParams",
    "GfsModel",
    "normalize_adjacency",
    "sample_adjacency",
    "gcn_forward",
    "gat_forward",
    "sage_forward",
    "sum_readout",
    "mlp_forward",
    "gcpu_forward",
    "gfs_forward",
]

VARIANTS = ("GCN", "GAT", "SAGE")
GNN_LAYERS = 3
LEAKY_SLOPE = 0.2


def _glorot(rng, fan_in, fan_out, shape=None):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


@dataclass(eq=False)
class GcpuParams:
    """Weights of one consequent unit."""

    variant: str
    gnn_weights: list
    mlp_weights: list
    mlp_biases: list
    gat_attention: list | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if (self.variant == "GAT") != (self.gat_attention is not None):
            raise ValueError("attention vectors are required for GAT and only for GAT")

    @classmethod
    def init(cls, variant, d_in, d_h, d_mlp, n_classes, rng, prefix=""):
        dims = [d_in] + [d_h] * GNN_LAYERS
        gnn = [ad.Parameter(_glorot(rng, dims[l], dims[l + 1]), f"{prefix}gnn{l}.W")
               for l in range(GNN_LAYERS)]
        att = None
        if variant == "GAT":
            att = [ad.Parameter(_glorot(rng, 2 * d_h, 1), f"{prefix}gnn{l}.att")
                   for l in range(GNN_LAYERS)]
        mdims = [d_h, d_mlp, d_mlp, n_classes]
        W = [ad.Parameter(_glorot(rng, mdims[l], mdims[l + 1]), f"{prefix}mlp{l}.W") for l in range(3)]
        b = [ad.Parameter(np.zeros((1, mdims[l + 1])), f"{prefix}mlp{l}.b") for l in range(3)]
        return cls(variant, gnn, W, b, att)

    def parameters(self) -> list:
        out = list(self.gnn_weights)
        if self.gat_attention is not None:
            out += self.gat_attention
        return out + list(self.mlp_weights) + list(self.mlp_biases)


@dataclass(eq=False)
class GfsModel:
    """K consequent units of one variant plus the rule base that weights them."""

    rulebase: RuleBase
    gcpus: list
    dims: tuple
    variant: str = "GCN"
    seed: int = 0
    sage_sample: int | None = None

    def __post_init__(self):
        if len(self.gcpus) != self.rulebase.K:
            raise ValueError(f"{len(self.gcpus)} units for a rule base of {self.rulebase.K} rules")
        if any(u.variant != self.variant for u in self.gcpus):
            raise ValueError("all units must share the model variant")

    @classmethod
    def init(cls, rulebase, variant, d_in, d_h, n_classes, d_mlp=None, seed=0, sage_sample=None):
        d_mlp = d_mlp or d_h
        rng = np.random.default_rng(seed)
        units = [GcpuParams.init(variant, d_in, d_h, d_mlp, n_classes, rng, prefix=f"rule{k}.")
                 for k in range(rulebase.K)]
        return cls(rulebase, units, (d_in, d_h, d_mlp, n_classes), variant, seed, sage_sample)

    @property
    def K(self) -> int:
        return len(self.gcpus)

    def parameters(self) -> list:
        return [p for u in self.gcpus for p in u.parameters()]


# --------------------------------------------------------------------------
# graph operators
# --------------------------------------------------------------------------


def _adjacency(batch):
    return batch.block_adjacency if isinstance(batch, BatchedGraph) else sp.csr_matrix(batch)


def normalize_adjacency(batch) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` for a batch (or a bare adjacency matrix)."""
    if isinstance(batch, BatchedGraph) and "A_hat" in batch.cache:
        return batch.cache["A_hat"]
    A = _adjacency(batch)
    At = (A + sp.identity(A.shape[0], format="csr")).tocsr()
    dinv = 1.0 / np.sqrt(np.asarray(At.sum(axis=1)).ravel())
    out = sp.diags(dinv) @ At @ sp.diags(dinv)
    out = out.tocsr()
    if isinstance(batch, BatchedGraph):
        batch.cache["A_hat"] = out
    return out


def sample_adjacency(batch, r: int, rng) -> sp.csr_matrix:
    """Keep at most ``r`` uniformly drawn neighbors per node, then normalize
    like :func:`normalize_adjacency` using row degrees of the sampled graph."""
    A = _adjacency(batch).tocsr()
    rows, cols = [], []
    for i in range(A.shape[0]):
        nb = A.indices[A.indptr[i]:A.indptr[i + 1]]
        if nb.size > r:
            nb = rng.choice(nb, size=r, replace=False)
        rows.extend([i] * nb.size)
        cols.extend(nb.tolist())
    n = A.shape[0]
    As = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)) + sp.identity(n, format="csr")
    deg = np.asarray(As.sum(axis=1)).ravel()
    dinv = 1.0 / np.sqrt(deg)
    # row i, column j scaled by 1/sqrt(d_i d_j)
    return (sp.diags(dinv) @ As @ sp.diags(dinv)).tocsr()


def _edges_with_self_loops(batch):
    if isinstance(batch, BatchedGraph) and "gat_edges" in batch.cache:
        return batch.cache["gat_edges"]
    A = _adjacency(batch)
    n = A.shape[0]
    At = (A + sp.identity(n, format="csr")).tocoo()
    order = np.lexsort((At.col, At.row))
    edges = (At.row[order].astype(np.int64), At.col[order].astype(np.int64))
    if isinstance(batch, BatchedGraph):
        batch.cache["gat_edges"] = edges
    return edges


def gcn_forward(A_hat, X, params: GcpuParams, layers: int = GNN_LAYERS) -> ad.Value:
    """``H <- relu(A_hat H W)`` for the first ``layers`` GNN weights."""
    H = ad.as_value(X)
    for W in params.gnn_weights[:layers]:
        H = ad.relu(ad.sparse_dense_matmul(A_hat, ad.matmul(H, W)))
    return H


def gat_layer(edges, n, H, W, a, slope=LEAKY_SLOPE, return_attention=False):
    dst, src = edges
    Z = ad.matmul(H, W)
    d_h = W.shape[1]
    s_dst = ad.matmul(Z, ad.slice_rows(a, 0, d_h))
    s_src = ad.matmul(Z, ad.slice_rows(a, d_h, 2 * d_h))
    e = ad.leaky_relu(ad.add(ad.gather_rows(s_dst, dst), ad.gather_rows(s_src, src)), slope)
    alpha = ad.segment_softmax(e, dst, n)
    msg = ad.scale_rows(ad.gather_rows(Z, src), alpha)
    out = ad.relu(ad.segment_sum(msg, dst, n))
    return (out, alpha) if return_attention else out


def gat_forward(batch, X, params: GcpuParams, layers: int = GNN_LAYERS, return_attention=False):
    """Three single-head attention layers over neighbors plus a self loop.

    ``batch`` is a :class:`BatchedGraph` or an adjacency matrix. With
    ``return_attention`` the per-layer attention coefficients are returned
    as ``(dst, src, [alpha_l])`` alongside the node features.
    """
    edges = _edges_with_self_loops(batch)
    n = _adjacency(batch).shape[0]
    H = ad.as_value(X)
    alphas = []
    for W, a in list(zip(params.gnn_weights, params.gat_attention))[:layers]:
        H, alpha = gat_layer(edges, n, H, W, a, return_attention=True)
        alphas.append(alpha.data[:, 0])
    if return_attention:
        return H, (edges[0], edges[1], alphas)
    return H


def sage_forward(A_hat, X, params: GcpuParams, layers: int = GNN_LAYERS) -> ad.Value:
    """GraphSAGE layers with the GCN aggregator over a (possibly sampled)
    normalized adjacency; on the full neighborhood this is the GCN stack."""
    H = ad.as_value(X)
    for W in params.gnn_weights[:layers]:
        H = ad.relu(ad.sparse_dense_matmul(A_hat, ad.matmul(H, W)))
    return H


def sum_readout(H, graph_index, num_graphs: int | None = None) -> ad.Value:
    return ad.segment_sum(H, graph_index, num_graphs)


def mlp_forward(h, params: GcpuParams) -> ad.Value:
    """Two rectified hidden layers and a linear output layer."""
    for l, (W, b) in enumerate(zip(params.mlp_weights, params.mlp_biases)):
        h = ad.add_row_broadcast(ad.matmul(h, W), b)
        if l < len(params.mlp_weights) - 1:
            h = ad.relu(h)
    return h


def gcpu_forward(batch: BatchedGraph, params: GcpuParams, sage_sample: int | None = None,
                 rng=None) -> ad.Value:
    """Per-graph logits, shape (num_graphs, C)."""
    X = batch.stacked_features
    if params.variant == "GCN":
        H = gcn_forward(normalize_adjacency(batch), X, params)
    elif params.variant == "GAT":
        H = gat_forward(batch, X, params)
    else:
        if sage_sample is None:
            A_hat = normalize_adjacency(batch)
        else:
            A_hat = sample_adjacency(batch, sage_sample, rng or np.random.default_rng(0))
        H = sage_forward(A_hat, X, params)
    return mlp_forward(sum_readout(H, batch.graph_index, batch.num_graphs), params)


def gfs_forward(batch: BatchedGraph, model: GfsModel, firing=None, rng=None):
    """Fused logits and class probabilities for a batch.

    ``firing`` holds normalized firing strengths (num_graphs x K). Raw
    memberships are accepted too since rows are renormalized; when omitted
    they are computed from the rule base for ``batch.graphs``.
    """
    if firing is None:
        if not batch.graphs:
            raise ValueError("batch carries no graphs to compute firing strengths from")
        firing = model.rulebase.firing(batch.graphs)
    firing = normalize_firing(firing)
    if firing.shape != (batch.num_graphs, model.K):
        raise ValueError(f"firing strengths of shape {firing.shape} for {batch.num_graphs} graphs and K={model.K}")
    fused = None
    for k, unit in enumerate(model.gcpus):
        term = ad.scale_rows(gcpu_forward(batch, unit, model.sage_sample, rng), firing[:, k:k + 1])
        fused = term if fused is None else ad.add(fused, term)
    return fused, ad.row_softmax(fused)
