"""
From clusters to fuzzy rules
============================

Each cluster prototype becomes the antecedent of one rule. A graph's
membership in a rule is its normalized kernel similarity to the prototype,
and the firing strengths are the memberships rescaled to sum to one.
"""

import numpy as np

from graphfuzzy.antecedent import build_rulebase
from graphfuzzy.clustering import run_k2pgc
from graphfuzzy.kernel import KernelConfig, kernel_matrix
from graphfuzzy.synthetic import motif_dataset

ds = motif_dataset(20, seed=0)
cfg = KernelConfig()
clusters = run_k2pgc(kernel_matrix(ds, cfg), 2, seed=0)
rb = build_rulebase(ds, clusters, cfg)

W = rb.cached_firing
print("firing strengths of the first five graphs\n", np.round(W[:5], 3))
print("row sums", W.sum(axis=1)[:5])

# every prototype fires its own rule hardest
print(np.round(rb.firing(rb.prototype_graphs), 3))

# unseen graphs use the same rule base
fresh = motif_dataset(6, seed=99)
print(np.round(rb.firing(fresh.graphs), 3), [g.graph_label for g in fresh.graphs])
