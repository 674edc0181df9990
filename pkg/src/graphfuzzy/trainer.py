"""Training loop: cross-entropy plus L2 penalty, Adam, exponential learning
rate decay, mini-batches and early stopping on validation accuracy."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .antecedent import RuleBase, build_rulebase
from .clustering import run_k2pgc
from .gcpu import VARIANTS, GfsModel, gfs_forward
from .graph import GraphDataset, batch_graphs
from .kernel import KernelConfig, NodeEncoder, kernel_matrix

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "AdamState",
    "EarlyStopping",
    "EvalResult",
    "gfs_loss",
    "adam_step",
    "lr_schedule",
    "build_antecedents",
    "train",
    "evaluate",
    "predict_proba",
]

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    K: int = 2
    variant: str = "GCN"
    d_h: int = 64
    d_mlp: int | None = None
    alpha: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 100
    lr0: float = 0.1
    decay: float = 0.98
    patience: int = 20
    seed: int = 0
    squared_penalty: bool = False
    sage_sample: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("K", "d_h", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.alpha <= 0 or self.lr0 <= 0 or self.decay <= 0:
            raise ValueError("alpha, lr0 and decay must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = -np.inf
    clamped_probabilities: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "lr", "train_loss", "train_acc", "val_loss", "val_acc"])
            for row in zip(self.epochs, self.lr, self.train_loss, self.train_acc, self.val_loss, self.val_acc):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    loss: float = float("nan")


class EarlyStopping:
    """Tracks the best score; stops after ``patience`` epochs without a strict
    improvement (ties do not reset the counter)."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record ``score``; True when it is a new best."""
        if score > self.best:
            self.best, self.best_epoch, self.stale = score, epoch, 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


def lr_schedule(epoch: int, config: TrainConfig | None = None) -> float:
    """``lr0 * decay ** epoch`` (epoch counted from 0)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    config = config or TrainConfig()
    return config.lr0 * config.decay ** epoch


def gfs_loss(probabilities, labels, params, alpha: float, squared: bool = False,
             logits=None) -> ad.Value:
    """Summed cross-entropy over the batch plus ``alpha * ||theta||_2``.

    ``squared=True`` uses the squared norm instead. When the fused ``logits``
    are given the cross-entropy is taken from their log-softmax, which keeps a
    gradient on graphs whose true-class probability underflows; otherwise
    probabilities below ``1e-12`` are clamped before the log. Either way the
    number of true-class probabilities below ``1e-12`` is kept in
    ``loss.info['clamped']``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    P = ad.as_value(probabilities)
    Y = np.zeros(P.shape)
    Y[np.arange(len(labels)), labels] = 1.0
    if logits is None:
        logp = ad.log(P, floor=PROB_FLOOR)
    else:
        logp = ad.log_softmax(logits)
    loss = ad.scale(ad.sum(ad.mul(logp, Y)), -1.0)
    params = list(params)
    if params and alpha > 0:
        sq = None
        for p in params:
            term = ad.frobenius_norm_sq(p)
            sq = term if sq is None else ad.add(sq, term)
        loss = ad.add(loss, ad.scale(sq if squared else ad.sqrt(sq), alpha))
    loss.info["clamped"] = int(np.sum(P.data[np.arange(len(labels)), labels] < PROB_FLOOR))
    return loss


def adam_step(params, state: AdamState, lr: float) -> None:
    """One Adam update of ``params`` in place from their ``grad`` fields."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient for parameter {p.name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p in params:
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * p.grad
        v = b2 * state.v[p.name] + (1.0 - b2) * p.grad ** 2
        state.m[p.name], state.v[p.name] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def build_antecedents(train_set: GraphDataset, K: int, kernel_config: KernelConfig | None = None,
                      seed: int = 0, max_iter: int = 100):
    """Cluster the training graphs and build the rule base from the medoids."""
    kernel_config = kernel_config or KernelConfig(seed=seed)
    encoder = NodeEncoder.fit(train_set)
    cache = kernel_matrix(train_set, kernel_config, encoder)
    clusters = run_k2pgc(cache, K, seed=seed, max_iter=max_iter)
    return build_rulebase(train_set, clusters, kernel_config, encoder), clusters


def _batches(n, batch_size, rng=None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def predict_proba(model: GfsModel, dataset: GraphDataset, firing=None, batch_size: int = 256):
    """Class probabilities for every graph of ``dataset``."""
    if firing is None:
        firing = model.rulebase.firing(dataset.graphs)
    out = []
    for idx in _batches(len(dataset), batch_size):
        batch = batch_graphs([dataset.graphs[i] for i in idx])
        _, probs = gfs_forward(batch, model, firing[idx])
        out.append(probs.data)
    return np.vstack(out)


def evaluate(model: GfsModel, split: GraphDataset, firing=None, batch_size: int = 256) -> EvalResult:
    """Accuracy of argmax predictions, confusion counts and mean cross-entropy."""
    P = predict_proba(model, split, firing, batch_size)
    y = split.labels
    pred = np.argmax(P, axis=1)
    C = model.dims[3]
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    loss = float(-np.mean(np.log(np.maximum(P[np.arange(len(y)), y], PROB_FLOOR))))
    return EvalResult(float(np.mean(pred == y)), confusion, loss)


def train(train_set: GraphDataset, val_set: GraphDataset, config: TrainConfig,
          rulebase: RuleBase | None = None, kernel_config: KernelConfig | None = None,
          callback=None):
    """Fit the consequent units of a graph fuzzy system.

    Without ``rulebase`` the antecedents are built by clustering
    ``train_set``. Each epoch shuffles the training graphs (seeded), takes
    one Adam step per mini-batch and then scores the validation split. The
    parameters of the epoch with the best validation accuracy are restored
    before returning; training stops after ``patience`` epochs without a
    strict improvement.

    Returns
    -------
    model : GfsModel
    history : TrainHistory
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation splits must be non-empty")
    batch_size = config.batch_size
    if batch_size > len(train_set):
        warnings.warn(f"batch_size {batch_size} exceeds {len(train_set)} training graphs; clamped")
        batch_size = len(train_set)

    if rulebase is None:
        rulebase, _ = build_antecedents(train_set, config.K, kernel_config, seed=config.seed)
    if rulebase.K != config.K:
        raise ValueError(f"rule base has {rulebase.K} rules, config asks for {config.K}")
    train_firing = rulebase.cached_firing
    if train_firing is None or train_firing.shape[0] != len(train_set):
        train_firing = rulebase.firing(train_set.graphs)
    val_firing = rulebase.firing(val_set.graphs)

    model = GfsModel.init(rulebase, config.variant, train_set.d_in, config.d_h, train_set.C,
                          d_mlp=config.d_mlp, seed=config.seed, sage_sample=config.sage_sample)
    params = model.parameters()
    state = AdamState()
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    best = [p.data.copy() for p in params]
    stopper = EarlyStopping(config.patience)

    for epoch in range(1, config.max_epochs + 1):
        lr = lr_schedule(epoch - 1, config)
        ce_total, hits = 0.0, 0
        for idx in _batches(len(train_set), batch_size, rng):
            batch = batch_graphs([train_set.graphs[i] for i in idx])
            fused, probs = gfs_forward(batch, model, train_firing[idx], rng)
            loss = gfs_loss(probs, batch.labels, params, config.alpha, config.squared_penalty,
                            logits=fused)
            history.clamped_probabilities += loss.info["clamped"]
            for p in params:
                p.zero_grad()
            loss.backward()
            adam_step(params, state, lr)
            # metrics of the batch as seen before the step, averaged per graph
            ce_total += float(-np.log(np.maximum(probs.data[np.arange(len(idx)), batch.labels], PROB_FLOOR)).sum())
            hits += int(np.sum(np.argmax(probs.data, axis=1) == batch.labels))
        val = evaluate(model, val_set, val_firing)
        history.epochs.append(epoch)
        history.lr.append(lr)
        history.train_loss.append(ce_total / len(train_set))
        history.train_acc.append(hits / len(train_set))
        history.val_loss.append(val.loss)
        history.val_acc.append(val.accuracy)
        log.debug("epoch %d lr=%.4g train_loss=%.4f val_acc=%.4f", epoch, lr,
                  history.train_loss[-1], val.accuracy)
        if callback is not None:
            callback(epoch, model, history)
        if stopper.update(epoch, val.accuracy):
            history.best_val_accuracy = val.accuracy
            history.best_epoch = epoch
            best = [p.data.copy() for p in params]
        elif stopper.should_stop:
            break

    for p, b in zip(params, best):
        p.data = b
    return model, history


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
