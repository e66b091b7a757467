"""Relative error of PAM over a grid of mantissas in [1, 2)^2."""
from __future__ import annotations

import csv

import numpy as np

from .. import instrument, native
from .. import pa_scalar as ps


def grid(resolution: int):
    """``(x1, x2, rel_err)`` arrays for ``x = 1 + i / R``, ``i < R``."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    axis = np.float32(1) + np.arange(resolution, dtype=np.float32) / np.float32(resolution)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    approx = ps.pam(x1, x2).astype(np.float64)
    with instrument.phase(instrument.REFERENCE):
        exact = native.mul64(x1, x2)
        rel = native.div64(approx - exact, exact)
    return x1, x2, rel


def run(cfg, out_dir) -> int:
    x1, x2, rel = grid(cfg.resolution)
    path = out_dir / "errmap.csv"
    with open(path, "w", newline="") as fp:
        w = csv.writer(fp)
        w.writerow(["x1", "x2", "rel_err_percent"])
        for a, b, r in zip(x1.ravel(), x2.ravel(), rel.ravel()):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(r * 100))])
    i = np.unravel_index(np.argmin(rel), rel.shape)
    print(f"wrote {path}; min {rel[i] * 100:.4f}% at ({x1[i]}, {x2[i]})")
    return 0
