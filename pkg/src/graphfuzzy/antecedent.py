"""Graph fuzzy rule antecedents.

Each rule owns a prototype graph; the membership of a graph in rule ``k`` is
the cosine-normalized propagation kernel between the graph and that
prototype, and firing strengths are memberships normalized to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clustering import ClusterModel
from .graph import Graph, GraphDataset
from .kernel import KernelConfig, NodeEncoder, cross_kernel, self_kernels

__all__ = ["RuleBase", "membership", "memberships", "firing_strengths",
           "normalize_firing", "build_rulebase"]


@dataclass(eq=False)
class RuleBase:
    prototype_graphs: tuple
    kernel_config: KernelConfig
    encoder: NodeEncoder
    prototype_self_kernels: np.ndarray = None
    # cached firing strengths of the graphs the rule base was built from
    cached_firing: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.prototype_graphs = tuple(self.prototype_graphs)
        if not self.prototype_graphs:
            raise ValueError("a rule base needs at least one rule")
        if self.prototype_self_kernels is None:
            self.prototype_self_kernels = self_kernels(self.prototype_graphs, self.kernel_config, self.encoder)
        self.prototype_self_kernels = np.asarray(self.prototype_self_kernels, dtype=np.float64)
        if np.any(self.prototype_self_kernels <= 0):
            raise ValueError("prototype self kernels must be positive")

    @property
    def K(self) -> int:
        return len(self.prototype_graphs)

    def memberships(self, graphs: Sequence[Graph]) -> np.ndarray:
        """Membership matrix, shape (len(graphs), K)."""
        graphs = list(graphs)
        cross = cross_kernel(graphs, self.prototype_graphs, self.kernel_config, self.encoder)
        own = self_kernels(graphs, self.kernel_config, self.encoder)
        if np.any(own <= 0):
            raise ValueError(f"graph {int(np.flatnonzero(own <= 0)[0])} has a zero self kernel")
        return cross / np.sqrt(np.outer(own, self.prototype_self_kernels))

    def firing(self, graphs: Sequence[Graph]) -> np.ndarray:
        """Normalized firing strengths, shape (len(graphs), K)."""
        return normalize_firing(self.memberships(graphs))


def normalize_firing(mu: np.ndarray) -> np.ndarray:
    """Rows of ``mu`` divided by their sums; all-zero rows become uniform."""
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    total = mu.sum(axis=1, keepdims=True)
    out = np.divide(mu, total, out=np.full_like(mu, 1.0 / mu.shape[1]), where=total > 0)
    return out


def memberships(G: Graph, rulebase: RuleBase) -> np.ndarray:
    return rulebase.memberships([G])[0]


def membership(G: Graph, rulebase: RuleBase, k: int) -> float:
    """Membership of ``G`` in the fuzzy set of rule ``k``."""
    return float(memberships(G, rulebase)[k])


def firing_strengths(G: Graph, rulebase: RuleBase) -> np.ndarray:
    return normalize_firing(memberships(G, rulebase)[None])[0]


def build_rulebase(dataset: GraphDataset, cluster_model: ClusterModel,
                   kernel_config: KernelConfig, encoder: NodeEncoder | None = None) -> RuleBase:
    """Rule base whose prototypes are the cluster medoids of ``dataset``.

    Firing strengths of every graph of ``dataset`` are computed once and kept
    in ``cached_firing``.
    """
    protos = np.asarray(cluster_model.prototypes)
    if protos.min() < 0 or protos.max() >= len(dataset):
        raise ValueError("prototype index out of range for this dataset")
    encoder = encoder or NodeEncoder.fit(dataset)
    rb = RuleBase(tuple(dataset.graphs[int(i)] for i in protos), kernel_config, encoder)
    rb.cached_firing = rb.firing(dataset.graphs)
    return rb
