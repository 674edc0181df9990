"""Kernel K-prototype graph clustering.

Medoid-style coordinate ascent on a precomputed Gram matrix: graphs are
assigned to the prototype they are most similar to, each cluster's prototype
becomes the member with the largest summed similarity to its cluster, and the
loop stops once the objective

    J = sum_i raw[i, prototypes[assignments[i]]]

repeats.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .kernel import KernelCache

__all__ = [
    "ClusterModel",
    "assign_clusters",
    "update_prototypes",
    "objective",
    "run_k2pgc",
    "exhaustive_best",
    "save_cluster_report",
    "load_cluster_report",
]

log = logging.getLogger(__name__)


def _raw(kernel) -> np.ndarray:
    return kernel.raw if isinstance(kernel, KernelCache) else np.asarray(kernel, dtype=np.float64)


@dataclass
class ClusterModel:
    K: int
    prototypes: np.ndarray
    assignments: np.ndarray
    objective_history: list = field(default_factory=list)
    iterations_run: int = 0
    # rules whose prototype would be claimed by another prototype under a
    # plain argmax (its kernel row is not diagonal-dominant)
    prototype_violations: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.objective_history[-1]

    def clusters(self) -> list:
        return [np.flatnonzero(self.assignments == k) for k in range(self.K)]


def assign_clusters(kernel, prototypes, pin_prototypes: bool = False) -> np.ndarray:
    """Nearest-prototype assignment, ties to the smallest rule index.

    With ``pin_prototypes`` every prototype is kept in its own cluster even
    when another prototype is more similar to it.
    """
    raw = _raw(kernel)
    prototypes = np.asarray(prototypes, dtype=np.int64)
    if len(np.unique(prototypes)) != len(prototypes):
        raise ValueError("prototype indices must be distinct")
    if prototypes.min() < 0 or prototypes.max() >= raw.shape[0]:
        raise ValueError("prototype index out of range")
    lam = np.argmax(raw[prototypes], axis=0)  # first maximum wins ties
    if pin_prototypes:
        lam[prototypes] = np.arange(len(prototypes))
    return lam


def update_prototypes(kernel, assignments, K: int) -> np.ndarray:
    """Medoid of every cluster: the member maximizing its within-cluster row sum.

    An empty cluster is re-seeded with the graph least similar (cosine
    normalized) to every other prototype; the partition is then recomputed
    with all prototypes pinned and the medoids taken again.
    """
    raw = _raw(kernel)
    lam = np.asarray(assignments, dtype=np.int64)
    N = raw.shape[0]
    if K > N:
        raise ValueError(f"K={K} exceeds the number of graphs N={N}")
    out = np.full(K, -1, dtype=np.int64)
    for k in range(K):
        members = np.flatnonzero(lam == k)
        if members.size:
            scores = raw[np.ix_(members, members)].sum(axis=1)
            out[k] = members[int(np.argmax(scores))]
    empty = np.flatnonzero(out < 0)
    if empty.size == 0:
        return out
    d = np.sqrt(np.diag(raw))
    norm = raw / np.outer(d, d)
    for k in empty:
        live = out[out >= 0]
        closeness = norm[live].max(axis=0) if live.size else np.zeros(N)
        closeness[live] = np.inf
        out[k] = int(np.argmin(closeness))
        log.debug("cluster %d empty, re-seeded with graph %d", k, out[k])
    lam = assign_clusters(raw, out, pin_prototypes=True)
    return update_prototypes(raw, lam, K)


def objective(kernel, prototypes, assignments) -> float:
    """Sum of every graph's kernel value with its own cluster prototype."""
    raw = _raw(kernel)
    prototypes = np.asarray(prototypes)
    assignments = np.asarray(assignments)
    return float(raw[np.arange(raw.shape[0]), prototypes[assignments]].sum())


def run_k2pgc(kernel, K: int, seed: int = 0, max_iter: int = 100,
              init: str = "random", n_init: int = 10) -> ClusterModel:
    """Cluster the graphs behind ``kernel`` around ``K`` prototype graphs.

    ``init="random"`` draws K distinct graphs uniformly; ``init="kpp"`` uses a
    kernel k-means++ style seeding on the normalized kernel. The objective of
    the initial partition is recorded first, then one value per
    assign/update iteration; iteration stops when two consecutive values are
    equal or after ``max_iter`` iterations. Prototypes are pinned to their own
    cluster during assignment, which keeps the objective non-decreasing.

    The ascent is restarted ``n_init`` times from independent draws of one
    seeded generator and the run with the largest final objective is kept
    (earliest run on ties).
    """
    raw = _raw(kernel)
    N = raw.shape[0]
    if not 1 <= K <= N:
        raise ValueError(f"K must lie in [1, N={N}], got {K}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if init not in ("random", "kpp"):
        raise ValueError(f"unknown init {init!r}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _ascend(raw, K, rng, max_iter, init)
        if best is None or run.objective > best.objective:
            best = run

    plain = assign_clusters(raw, best.prototypes)
    best.prototype_violations = [k for k in range(K) if plain[best.prototypes[k]] != k]
    if best.prototype_violations:
        log.warning("prototypes of rules %s are not diagonal-dominant among prototypes",
                    best.prototype_violations)
    return best


def _ascend(raw, K, rng, max_iter, init):
    N = raw.shape[0]
    protos = rng.choice(N, size=K, replace=False) if init == "random" else _kpp_seed(raw, K, rng)
    lam = assign_clusters(raw, protos, pin_prototypes=True)
    history = [objective(raw, protos, lam)]
    it = 0
    while it < max_iter:
        it += 1
        protos = update_prototypes(raw, lam, K)
        lam = assign_clusters(raw, protos, pin_prototypes=True)
        history.append(objective(raw, protos, lam))
        if history[-1] == history[-2]:
            break
    return ClusterModel(K, protos, lam, history, it)


def _kpp_seed(raw, K, rng):
    d = np.sqrt(np.diag(raw))
    norm = raw / np.outer(d, d)
    protos = [int(rng.integers(raw.shape[0]))]
    for _ in range(1, K):
        dist = np.clip(1.0 - norm[protos].max(axis=0), 0.0, None)
        dist[protos] = 0.0
        if dist.sum() == 0:
            rest = np.setdiff1d(np.arange(raw.shape[0]), protos)
            protos.append(int(rng.choice(rest)))
        else:
            protos.append(int(rng.choice(raw.shape[0], p=dist / dist.sum())))
    return np.array(protos, dtype=np.int64)


def exhaustive_best(kernel, K: int, pinned: bool = False):
    """Best objective over every set of K prototypes (brute force, small N only).

    With ``pinned`` each prototype is forced into its own cluster, matching
    the partitions :func:`run_k2pgc` can reach.
    """
    raw = _raw(kernel)
    best, arg = -np.inf, None
    for combo in combinations(range(raw.shape[0]), K):
        protos = np.array(combo)
        lam = assign_clusters(raw, protos, pin_prototypes=pinned)
        val = objective(raw, protos, lam)
        if val > best:
            best, arg = val, protos
    return float(best), arg


def save_cluster_report(model: ClusterModel, path) -> None:
    """Plain-text report, one ``key: values`` line per field."""
    def ints(xs):
        return " ".join(str(int(x)) for x in xs)

    with open(path, "w") as fh:
        fh.write(f"K: {model.K}\n")
        fh.write(f"iterations: {model.iterations_run}\n")
        fh.write(f"prototypes: {ints(model.prototypes)}\n")
        fh.write(f"assignments: {ints(model.assignments)}\n")
        fh.write("objective_history: " + " ".join(repr(float(v)) for v in model.objective_history) + "\n")
        fh.write(f"prototype_violations: {ints(model.prototype_violations)}\n")


def load_cluster_report(path) -> ClusterModel:
    fields = {}
    with open(path) as fh:
        for line in fh:
            if ":" in line:
                key, _, val = line.partition(":")
                fields[key.strip()] = val.split()
    return ClusterModel(
        K=int(fields["K"][0]),
        prototypes=np.array([int(v) for v in fields["prototypes"]], dtype=np.int64),
        assignments=np.array([int(v) for v in fields["assignments"]], dtype=np.int64),
        objective_history=[float(v) for v in fields["objective_history"]],
        iterations_run=int(fields["iterations"][0]),
        prototype_violations=[int(v) for v in fields.get("prototype_violations", [])],
    )
