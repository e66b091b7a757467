"""Tabulate PA functions and their exact/approximate derivatives on a grid.

For each function ``f`` with piecewise affine version ``f_hat`` and each
sample ``x`` the CSV holds ``f(x)``, ``f_hat(x)``, the forward relative
error, the true derivative times ``delta_y``, and the exact and
approximate backward results for the upstream gradient ``delta_y``.
"""
from __future__ import annotations

import csv

import numpy as np

from .. import instrument
from .. import pa_autodiff as ad
from .config import DERIVGRID_FUNCTIONS

HEADER = ["function", "x", "f", "f_hat", "fwd_rel_err", "deriv_true", "deriv_exact", "deriv_approx",
          "exact_rel_err", "approx_rel_err", "flag"]


def _graphs(c: np.float32):
    # name -> (PA graph, true f, true f', domain predicate); the constant c
    # is the multiplier for mul_const and the dividend for div.
    return {
        "mul_const": (lambda v: ad.pam(v, c), lambda x: c * x, lambda x: np.full_like(x, c), None),
        "div": (lambda v: ad.pad(c, v), lambda x: c / x, lambda x: -c / (x * x), lambda x: x != 0),
        "square": (lambda v: ad.pam(v, v), lambda x: x * x, lambda x: 2 * x, None),
        "sqrt": (lambda v: ad.pasqrt(v), np.sqrt, lambda x: 0.5 / np.sqrt(x), lambda x: x > 0),
        "exp2": (lambda v: ad.paexp2(v), np.exp2, lambda x: np.exp2(x) * np.log(2), None),
        "log2": (lambda v: ad.palog2(v), np.log2, lambda x: 1 / (x * np.log(2)), lambda x: x > 0),
        "exp": (lambda v: ad.paexp(v), np.exp, np.exp, None),
        "log": (lambda v: ad.palog(v), np.log, lambda x: 1 / x, lambda x: x > 0),
    }


def evaluate(function: str, xs, delta_y: float = 1.25, constant: float = 1.5) -> list[dict]:
    """Rows of the derivative table for one function."""
    graphs = _graphs(np.float32(constant))
    if function not in graphs:
        raise ValueError(f"unknown function {function!r}")
    g, f, df, domain = graphs[function]
    xs = np.asarray(xs, dtype=np.float32)
    dy = np.float32(delta_y)
    rows = []
    for x in xs:
        row = {"function": function, "x": float(x)}
        if domain is not None and not domain(np.float64(x)):
            row.update({k: "" for k in HEADER[2:-1]})
            row["flag"] = "domain"
            rows.append(row)
            continue
        y, tape, leaves = ad.forward(g, np.float32(x))
        exact = ad.backward(tape, y, seeds=np.float32(dy), modes=ad.DerivativeModes.all(ad.Mode.EXACT))
        approx = ad.backward(tape, y, seeds=np.float32(dy), modes=ad.DerivativeModes.all(ad.Mode.APPROX))
        d_exact = float(exact.get(leaves[0], np.float32(0)))
        d_approx = float(approx.get(leaves[0], np.float32(0)))
        with instrument.phase(instrument.REFERENCE):
            instrument.record("reference", 4)
            x64 = np.float64(x)
            fx = float(f(x64))
            dtrue = float(df(x64) * np.float64(dy))
            fhat = float(y.value)
            row.update(f=fx, f_hat=fhat, deriv_true=dtrue, deriv_exact=d_exact, deriv_approx=d_approx,
                       fwd_rel_err=_rel(fhat, fx), exact_rel_err=_rel(d_exact, dtrue),
                       approx_rel_err=_rel(d_approx, dtrue), flag="")
        rows.append(row)
    return rows


def _rel(a, b):
    return (a - b) / abs(b) if b != 0 else (0.0 if a == 0 else float("inf"))


def run(cfg, out_dir) -> int:
    names = DERIVGRID_FUNCTIONS if cfg.function == "all" else (cfg.function,)
    xs = np.linspace(cfg.x_min, cfg.x_max, cfg.samples, dtype=np.float64).astype(np.float32)
    with open(out_dir / "derivgrid.csv", "w", newline="") as fp:
        w = csv.DictWriter(fp, HEADER)
        w.writeheader()
        for name in names:
            for row in evaluate(name, xs, cfg.delta_y, cfg.constant):
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    print(f"wrote {out_dir / 'derivgrid.csv'} ({len(names)} functions x {cfg.samples} samples)")
    return 0
