"""``train`` and ``sweep`` commands."""
from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np

from .. import datasets
from ..estimators import PAMLPClassifier, PATransformerTagger, TrainingDiverged
from . import config as config_mod

METRIC_HEADER = ["epoch", "loss", "train_metric", "eval_metric", "native_ops_train", "native_ops_setup"]

_SHARED = ("batch_size", "beta1", "beta2", "eps", "weight_decay", "warmup_steps", "schedule",
           "label_smoothing", "dropout", "layernorm_eps", "matmul", "mantissa_bits", "softmax_pa",
           "layernorm_pa", "loss_pa", "optimizer_pa", "deriv_matmul", "deriv_softmax", "deriv_layernorm",
           "deriv_loss", "deriv_default")


def make_estimator(cfg):
    kw = {k: getattr(cfg, k) for k in _SHARED}
    kw.update(epochs=cfg.resolved_epochs, lr=cfg.resolved_lr, random_state=cfg.seed)
    if cfg.model == "mlp":
        return PAMLPClassifier(hidden=cfg.hidden, **kw)
    return PATransformerTagger(layers=cfg.layers, heads=cfg.heads, embed_dim=cfg.embed_dim, ff_dim=cfg.ff_dim,
                               vocab_size=cfg.vocab_size, max_len=cfg.seq_len, **kw)


def make_data(cfg):
    """``(X_train, y_train, X_test, y_test)``; the data depend on ``data_seed`` only."""
    if cfg.model == "mlp":
        Xtr, ytr = datasets.spirals(max(1, cfg.n_train >> 1), cfg.spiral_noise, seed=cfg.data_seed)
        Xte, yte = datasets.spirals(max(1, cfg.n_test >> 1), cfg.spiral_noise, seed=cfg.data_seed + 1)
    else:
        Xtr, ytr = datasets.reversal(cfg.n_train, cfg.seq_len, cfg.vocab_size, seed=cfg.data_seed)
        Xte, yte = datasets.reversal(cfg.n_test, cfg.seq_len, cfg.vocab_size, seed=cfg.data_seed + 1)
    return Xtr, ytr, Xte, yte


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_metrics(history, path) -> None:
    with open(path, "w", newline="") as fp:
        w = csv.writer(fp)
        w.writerow(METRIC_HEADER)
        for row in history:
            w.writerow([_fmt(row[k]) for k in METRIC_HEADER])


def train_once(cfg, out_dir: Path):
    """Train one model; returns ``(estimator, status)``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    config_mod.save(cfg, out_dir / "config.txt")
    Xtr, ytr, Xte, yte = make_data(cfg)
    est = make_estimator(cfg)
    try:
        est.fit(Xtr, ytr, eval_set=(Xte, yte))
    except TrainingDiverged as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return est, 1
    write_metrics(est.history_, out_dir / "metrics.csv")
    est.save(out_dir / "checkpoint.bin")
    return est, 0


def run(cfg, out_dir: Path) -> int:
    est, status = train_once(cfg, out_dir)
    if status:
        return status
    last = est.history_[-1]
    print(f"model={cfg.model} matmul={cfg.matmul} bits={cfg.mantissa_bits} seed={cfg.seed} "
          f"epochs={last['epoch']} loss={last['loss']:.4f} eval_metric={last['eval_metric']:.4f} "
          f"native_ops_train={last['native_ops_train']}")
    return 0


SWEEP_HEADER = ["mantissa_bits", "n_seeds", "mean_eval_metric", "min_eval_metric", "max_eval_metric",
                "mean_final_loss", "per_seed_eval_metric"]


def sweep(cfg, out_dir: Path) -> tuple[int, list[dict]]:
    """Train every (bits, seed) combination; returns status and per-run rows."""
    runs = []
    for bits in sorted(set(cfg.sweep_bits), reverse=True):
        for seed in cfg.sweep_seeds:
            sub = cfg.replace(mantissa_bits=bits, seed=seed)
            est, status = train_once(sub, out_dir / f"bits{bits}_seed{seed}")
            if status:
                return status, runs
            last = est.history_[-1]
            runs.append({"mantissa_bits": bits, "seed": seed, "final_loss": last["loss"],
                         "eval_metric": last["eval_metric"], "native_ops_train": last["native_ops_train"]})
    return 0, runs


def run_sweep(cfg, out_dir: Path) -> int:
    status, runs = sweep(cfg, out_dir)
    if status:
        return status
    with open(out_dir / "sweep_runs.csv", "w", newline="") as fp:
        w = csv.writer(fp)
        w.writerow(["mantissa_bits", "seed", "final_loss", "eval_metric", "native_ops_train"])
        for r in runs:
            w.writerow([r["mantissa_bits"], r["seed"], _fmt(r["final_loss"]), _fmt(r["eval_metric"]),
                        r["native_ops_train"]])
    with open(out_dir / "sweep.csv", "w", newline="") as fp:
        w = csv.writer(fp)
        w.writerow(SWEEP_HEADER)
        for bits in sorted(set(cfg.sweep_bits), reverse=True):
            rs = [r for r in runs if r["mantissa_bits"] == bits]
            m = np.array([r["eval_metric"] for r in rs])
            w.writerow([bits, len(rs), _fmt(m.mean()), _fmt(m.min()), _fmt(m.max()),
                        _fmt(np.mean([r["final_loss"] for r in rs])), ";".join(_fmt(v) for v in m)])
            print(f"bits={bits:>2} mean_eval_metric={m.mean():.4f} per_seed={np.round(m, 4).tolist()}")
    return 0
