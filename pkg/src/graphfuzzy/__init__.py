"""Graph fuzzy systems for graph classification.

Fuzzy rule antecedents are prototype graphs found by kernel K-prototype
clustering under a propagation kernel; each rule's consequent is a small
graph neural network (GCN, GAT or GraphSAGE) with sum readout and an MLP,
and predictions fuse the rule outputs weighted by normalized firing
strengths.
"""

from .graph import (Graph, GraphDataset, BatchedGraph, TUFormatError, parse_tu_dataset,
                    write_tu_dataset, batch_graphs, unbatch, stratified_split)
from .kernel import (KernelConfig, KernelCache, NodeEncoder, propagate, node_kernel,
                     graph_pair_kernel, kernel_matrix, save_kernel_cache, load_kernel_cache)
from .clustering import ClusterModel, run_k2pgc
from .antecedent import RuleBase, build_rulebase, membership, firing_strengths
from .gcpu import GcpuParams, GfsModel, gcpu_forward, gfs_forward
from .trainer import TrainConfig, TrainHistory, train, evaluate
from .checkpoint import save_model, load_model

__version__ = "0.1.0"
