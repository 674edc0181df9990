"""
Prototype clustering with a graph kernel
========================================

K2PGC alternates between assigning every graph to its most similar
prototype and moving each prototype to the medoid of its cluster. On
small problems the result can be compared with brute-force enumeration.
"""

import numpy as np

from graphfuzzy.clustering import exhaustive_best, run_k2pgc
from graphfuzzy.kernel import KernelConfig, kernel_matrix
from graphfuzzy.synthetic import density_families

# three cliques and three paths
ds = density_families(3, seed=0)
cache = kernel_matrix(ds, KernelConfig())

model = run_k2pgc(cache, K=2, seed=0)
print("prototypes", model.prototypes)
print("assignments", model.assignments, "true", [g.graph_label for g in ds.graphs])
print("objective history", model.objective_history)

best, assignment = exhaustive_best(cache, 2)
print("brute-force optimum", best, "found", model.objective)

# %%
# A single ascent can stop in a local optimum; restarts fix most of that.
from graphfuzzy.graph import GraphDataset
from graphfuzzy.synthetic import random_graph

hits = {1: 0, 10: 0}
for inst in range(30):
    rng = np.random.default_rng(inst)
    c = kernel_matrix(GraphDataset(tuple(random_graph(rng, 1, 6) for _ in range(6))), KernelConfig(seed=inst))
    opt, _ = exhaustive_best(c, 2)
    for n_init in hits:
        hits[n_init] += run_k2pgc(c, 2, seed=inst, n_init=n_init).objective == opt
print("optimum reached out of 30:", hits)
