"""Command line entry point: ``graphfuzzy {kernel,cluster,train,eval,grid}``.

Every option can also come from a JSON file given with ``--config``; flags on
the command line win over the file. Datasets are TU-format directories below
``--data-dir`` (default: ``$GFS_DATA_DIR`` or the working directory), or one
of the built-in ``synthetic:`` collections.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import load_model, save_model
from .clustering import run_k2pgc, save_cluster_report
from .graph import GraphDataset, parse_tu_dataset, stratified_split
from .kernel import KernelConfig, kernel_matrix, load_kernel_cache, save_kernel_cache
from .synthetic import density_families, motif_dataset, separable_motifs
from .trainer import TrainConfig, build_antecedents, config_dict, evaluate, train

log = logging.getLogger("graphfuzzy")

DATA_ENV = "GFS_DATA_DIR"
SPLIT = (0.8, 0.1, 0.1)

SYNTHETIC = {
    "synthetic:motifs": lambda seed: motif_dataset(40, seed=seed),
    "synthetic:separable": lambda seed: separable_motifs(40, seed=seed),
    "synthetic:density": lambda seed: density_families(3, seed=seed),
}

# option name -> default; also the accepted keys of a --config file
DEFAULTS = {
    "dataset": None,
    "data_dir": None,
    "kernel_scheme": "hashed",
    "tmax": 5,
    "rules": 2,
    "variant": "GCN",
    "hidden": 64,
    "alpha": 1e-4,
    "batch_size": 32,
    "epochs": 100,
    "patience": 20,
    "seed": 0,
    "out": None,
    "cache": None,
    "checkpoint": None,
    "split": "test",
    "seeds": 5,
}
# the full search sets; narrow them with flags or a config file
GRID_DEFAULTS = {
    "rules": list(range(2, 11)),
    "hidden": [16, 32, 64, 128, 256],
    "alpha": [10.0 ** e for e in range(-10, 7)],
}


class UsageError(Exception):
    pass


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default option values")
    common.add_argument("--dataset", help="TU dataset name or synthetic:{motifs,separable,density}")
    common.add_argument("--data-dir", help=f"directory holding TU datasets (default ${DATA_ENV})")
    common.add_argument("--kernel-scheme", choices=["hashed", "rbf"])
    common.add_argument("--tmax", type=int, help="propagation iterations")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--variant", choices=["GCN", "GAT", "SAGE"])
    model.add_argument("--batch-size", type=int)
    model.add_argument("--epochs", type=int)
    model.add_argument("--patience", type=int)

    p = argparse.ArgumentParser(prog="graphfuzzy", description="Graph fuzzy system for graph classification")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel", parents=[common], help="compute and store the propagation-kernel Gram matrix")
    k.set_defaults(func=cmd_kernel)

    c = sub.add_parser("cluster", parents=[common], help="run K2PGC on a kernel cache")
    c.add_argument("--cache", help="kernel cache file (computed from --dataset when omitted)")
    c.add_argument("--rules", type=int, help="number of clusters K")
    c.set_defaults(func=cmd_cluster)

    t = sub.add_parser("train", parents=[common, model], help="train one model")
    t.add_argument("--rules", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--alpha", type=float)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    e.add_argument("--checkpoint", help="model file written by train")
    e.add_argument("--split", choices=["train", "val", "test", "all"])
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("grid", parents=[common, model], help="grid search over K, hidden width and alpha")
    g.add_argument("--rules", type=int, nargs="+")
    g.add_argument("--hidden", type=int, nargs="+")
    g.add_argument("--alpha", type=float, nargs="+")
    g.add_argument("--seeds", type=int, help="runs per grid cell")
    g.set_defaults(func=cmd_grid)
    return p


def resolve(args) -> dict:
    """Merge defaults, the --config file and explicit flags (in that order)."""
    opts = dict(DEFAULTS)
    if args.command == "grid":
        opts.update(GRID_DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            file_opts = json.load(fh)
        if not isinstance(file_opts, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(file_opts) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        opts.update(file_opts)
    for key, val in vars(args).items():
        if key in DEFAULTS and val is not None:
            opts[key] = val
    if opts["data_dir"] is None:
        opts["data_dir"] = os.environ.get(DATA_ENV, ".")
    if args.command == "grid":
        for key in GRID_DEFAULTS:
            if not isinstance(opts[key], list):
                opts[key] = [opts[key]]
    return opts


def load_dataset(name: str, data_dir, seed: int = 0) -> GraphDataset:
    if name is None:
        raise UsageError("--dataset is required")
    if name in SYNTHETIC:
        return SYNTHETIC[name](seed)
    base = Path(data_dir)
    directory = base / name if (base / name).is_dir() else base
    return parse_tu_dataset(directory, name)


def kernel_config(opts) -> KernelConfig:
    return KernelConfig(t_max=opts["tmax"], scheme=opts["kernel_scheme"], seed=opts["seed"])


def train_config(opts, K=None, d_h=None, alpha=None, seed=None) -> TrainConfig:
    return TrainConfig(
        K=K if K is not None else opts["rules"],
        variant=opts["variant"],
        d_h=d_h if d_h is not None else opts["hidden"],
        alpha=alpha if alpha is not None else opts["alpha"],
        batch_size=opts["batch_size"],
        max_epochs=opts["epochs"],
        patience=min(opts["patience"], opts["epochs"]),
        seed=seed if seed is not None else opts["seed"],
    )


def _out_dir(opts, default):
    path = Path(opts["out"] or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_kernel(opts) -> int:
    ds = load_dataset(opts["dataset"], opts["data_dir"], opts["seed"])
    t0 = time.perf_counter()
    cache = kernel_matrix(ds, kernel_config(opts))
    elapsed = time.perf_counter() - t0
    out = Path(opts["out"] or f"{ds.name or 'dataset'}.kernel")
    save_kernel_cache(cache, out)
    print(f"N={cache.N} scheme={cache.scheme} t_max={cache.t_max} seed={cache.seed} "
          f"time={elapsed:.2f}s -> {out}")
    return 0


def cmd_cluster(opts) -> int:
    if opts["cache"]:
        cache = load_kernel_cache(opts["cache"])
    else:
        ds = load_dataset(opts["dataset"], opts["data_dir"], opts["seed"])
        cache = kernel_matrix(ds, kernel_config(opts))
    model = run_k2pgc(cache, opts["rules"], seed=opts["seed"])
    out = Path(opts["out"] or "clusters.txt")
    save_cluster_report(model, out)
    print(f"K={model.K} iterations={model.iterations_run} objective={model.objective!r}")
    print("prototypes: " + " ".join(str(int(p)) for p in model.prototypes))
    print("cluster sizes: " + " ".join(str(len(c)) for c in model.clusters()))
    if model.prototype_violations:
        print(f"prototype violations: {model.prototype_violations}")
    return 0


def _run(ds, opts, cfg, out_dir=None):
    tr, va, te = stratified_split(ds, SPLIT, seed=cfg.seed)
    rb, clusters = build_antecedents(tr, cfg.K, kernel_config({**opts, "seed": cfg.seed}), seed=cfg.seed)
    model, hist = train(tr, va, cfg, rulebase=rb)
    result = {
        "best_epoch": hist.best_epoch,
        "epochs_run": len(hist.epochs),
        "val_accuracy": hist.best_val_accuracy,
        "test_accuracy": evaluate(model, te).accuracy,
        "train_accuracy": evaluate(model, tr, firing=rb.cached_firing).accuracy,
    }
    if out_dir is not None:
        extra = {"dataset": opts["dataset"], "split": list(SPLIT), "split_seed": cfg.seed,
                 "train_config": config_dict(cfg), "best_val_accuracy": hist.best_val_accuracy}
        save_model(model, out_dir / "model.gfs", extra=extra)
        hist.to_csv(out_dir / "history.csv")
        save_cluster_report(clusters, out_dir / "clusters.txt")
        _write_json(out_dir / "metrics.json", result)
    return result


def cmd_train(opts) -> int:
    ds = load_dataset(opts["dataset"], opts["data_dir"], opts["seed"])
    cfg = train_config(opts)
    out_dir = _out_dir(opts, "run")
    res = _run(ds, opts, cfg, out_dir)
    print(f"best epoch {res['best_epoch']} of {res['epochs_run']}: val acc {res['val_accuracy']:.4f}, "
          f"test acc {res['test_accuracy']:.4f} -> {out_dir}")
    return 0


def cmd_eval(opts) -> int:
    if not opts["checkpoint"]:
        raise UsageError("--checkpoint is required")
    if not Path(opts["checkpoint"]).is_file():
        raise UsageError(f"checkpoint {opts['checkpoint']} not found")
    model, extra = load_model(opts["checkpoint"])
    name = opts["dataset"] or extra.get("dataset")
    seed = extra.get("split_seed", opts["seed"])
    ds = load_dataset(name, opts["data_dir"], seed)
    if opts["split"] == "all":
        part = ds
    else:
        tr, va, te = stratified_split(ds, tuple(extra.get("split", SPLIT)), seed=seed)
        part = {"train": tr, "val": va, "test": te}[opts["split"]]
    res = evaluate(model, part)
    print(f"{opts['split']} accuracy {res.accuracy:.4f} on {len(part)} graphs")
    print("confusion (rows true, columns predicted):")
    for row in res.confusion:
        print("  " + " ".join(f"{int(v):5d}" for v in row))
    if opts["out"]:
        _write_json(opts["out"], {"split": opts["split"], "accuracy": res.accuracy,
                                  "confusion": res.confusion.tolist(), "loss": res.loss})
    return 0


def _fmt(mean, std):
    return f"{100 * mean:.2f} (±{100 * std:.2f})"


def cmd_grid(opts) -> int:
    ds = load_dataset(opts["dataset"], opts["data_dir"], opts["seed"])
    out_dir = _out_dir(opts, "grid")
    seeds = [opts["seed"] + i for i in range(opts["seeds"])]
    run_rows, cells, failed = [], [], 0
    for K in opts["rules"]:
        for d_h in opts["hidden"]:
            for alpha in opts["alpha"]:
                accs, vals, errors = [], [], []
                for seed in seeds:
                    try:
                        res = _run(ds, opts, train_config(opts, K, d_h, alpha, seed))
                    except Exception as exc:  # a failing cell must not stop the grid
                        log.error("K=%s d_h=%s alpha=%s seed=%s failed: %s", K, d_h, alpha, seed, exc)
                        errors.append(f"seed {seed}: {exc}")
                        run_rows.append([K, d_h, alpha, seed, "", "", "failed"])
                        continue
                    accs.append(res["test_accuracy"])
                    vals.append(res["val_accuracy"])
                    run_rows.append([K, d_h, alpha, seed, repr(res["val_accuracy"]),
                                     repr(res["test_accuracy"]), "ok"])
                failed += len(errors)
                cells.append({
                    "K": K, "d_h": d_h, "alpha": alpha, "runs": len(accs), "failed": len(errors),
                    "val_mean": float(np.mean(vals)) if vals else math.nan,
                    "test_mean": float(np.mean(accs)) if accs else math.nan,
                    "test_std": float(np.std(accs)) if accs else math.nan,
                    "errors": "; ".join(errors),
                })

    with open(out_dir / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "d_h", "alpha", "seed", "val_accuracy", "test_accuracy", "status"])
        w.writerows(run_rows)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(cells[0]))
        w.writeheader()
        for c in cells:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in c.items()})

    header = ["K", "d_h", "alpha", "runs", "val acc", "test acc (%)"]
    rows = [[str(c["K"]), str(c["d_h"]), f"{c['alpha']:g}", f"{c['runs']}/{c['runs'] + c['failed']}",
             f"{100 * c['val_mean']:.2f}" if c["runs"] else "-",
             _fmt(c["test_mean"], c["test_std"]) if c["runs"] else "failed"] for c in cells]
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
    lines = ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in [header] + rows]
    table = "\n".join(lines) + "\n"
    (out_dir / "summary.txt").write_text(table)
    sys.stdout.write(table)
    if failed:
        print(f"{failed} run(s) failed; see {out_dir / 'summary.csv'}")
    return 1 if failed else 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args)
        return args.func(opts)
    except UsageError as exc:
        print(f"graphfuzzy {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"graphfuzzy {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
