"""Binary model checkpoints.

Layout: an 8-byte magic, a little-endian uint64 header length, a JSON header
(sorted keys) and then every array blob in header order as row-major
little-endian float64. The rule base travels with the model (prototype
graphs, node encoder, kernel settings) so inference needs no training data.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct

import numpy as np

from .antecedent import RuleBase
from .gcpu import GcpuParams, GfsModel
from .graph import Graph
from .kernel import KernelConfig, NodeEncoder
from . import autodiff as ad

__all__ = ["save_model", "load_model", "kernel_digest"]

_MAGIC = b"GFSMODL1"


def kernel_digest(config: KernelConfig) -> str:
    text = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _model_arrays(model: GfsModel) -> dict:
    arrays = {p.name: p.data for p in model.parameters()}
    rb = model.rulebase
    for k, g in enumerate(rb.prototype_graphs):
        arrays[f"prototype{k}.adjacency"] = g.adjacency
        arrays[f"prototype{k}.features"] = g.node_features
        if g.node_labels is not None:
            arrays[f"prototype{k}.labels"] = g.node_labels.astype(np.float64)
    arrays["prototype_self_kernels"] = rb.prototype_self_kernels
    arrays.update(rb.encoder.to_arrays())
    return arrays


def save_model(model: GfsModel, path, extra: dict | None = None) -> None:
    """Write ``model`` to ``path``; ``extra`` is stored verbatim in the header."""
    arrays = _model_arrays(model)
    header = {
        "variant": model.variant,
        "K": model.K,
        "dims": list(model.dims),
        "seed": model.seed,
        "sage_sample": model.sage_sample,
        "kernel_config": dataclasses.asdict(model.rulebase.kernel_config),
        "kernel_digest": kernel_digest(model.rulebase.kernel_config),
        "prototype_graph_labels": [g.graph_label for g in model.rulebase.prototype_graphs],
        "blobs": [[name, list(np.shape(a))] for name, a in arrays.items()],
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for name, _ in header["blobs"]:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def load_model(path):
    """Read a checkpoint; returns ``(model, extra)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        arrays = {}
        for name, shape in header["blobs"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"{path}: truncated blob {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)

    K = header["K"]
    kc = KernelConfig(**header["kernel_config"])
    if kernel_digest(kc) != header["kernel_digest"]:
        raise ValueError(f"{path}: kernel config digest mismatch")
    protos = []
    for k in range(K):
        labels = arrays.get(f"prototype{k}.labels")
        protos.append(Graph(arrays[f"prototype{k}.adjacency"], arrays[f"prototype{k}.features"],
                            None if labels is None else labels.astype(np.int64),
                            header["prototype_graph_labels"][k]))
    rb = RuleBase(tuple(protos), kc, NodeEncoder.from_arrays(arrays), arrays["prototype_self_kernels"])

    def param(name):
        return ad.Parameter(arrays[name], name)

    units = []
    for k in range(K):
        pre = f"rule{k}."
        gnn = [param(f"{pre}gnn{l}.W") for l in range(3)]
        att = [param(f"{pre}gnn{l}.att") for l in range(3)] if header["variant"] == "GAT" else None
        W = [param(f"{pre}mlp{l}.W") for l in range(3)]
        b = [param(f"{pre}mlp{l}.b") for l in range(3)]
        units.append(GcpuParams(header["variant"], gnn, W, b, att))
    model = GfsModel(rb, units, tuple(header["dims"]), header["variant"], header["seed"], header["sage_sample"])
    return model, header["extra"]
