"""Synthetic, seed-deterministic toy tasks.

Generation happens before training and is attributed to the setup phase.
"""
from __future__ import annotations

import numpy as np

from . import instrument


def spirals(n_per_class: int = 500, noise: float = 0.2, turns: float = 1.5, seed: int = 0):
    """Two interleaved spirals in the plane.

    Returns ``X`` (2n, 2) float32 and labels ``y`` in {0, 1}.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    rng = np.random.default_rng(seed)
    with instrument.phase(instrument.SETUP):
        n = n_per_class
        instrument.record("mul", 8 * n)
        t = np.sqrt(rng.random(n)) * turns * 2 * np.pi
        r = t / (turns * 2 * np.pi) * 4 + 0.25
        arm = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
        X = np.concatenate([arm, -arm]) + rng.normal(scale=noise, size=(2 * n, 2))
        y = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
    order = rng.permutation(2 * n)
    return X[order].astype(np.float32), y[order]


def reversal(n_samples: int = 1000, seq_len: int = 8, vocab_size: int = 8, seed: int = 0):
    """Token sequences and their reversals; targets are per position."""
    if n_samples < 1 or seq_len < 1 or vocab_size < 2:
        raise ValueError("invalid reversal task size")
    rng = np.random.default_rng(seed)
    X = rng.integers(0, vocab_size, size=(n_samples, seq_len))
    return X, X[:, ::-1].copy()


def train_test_split(X, y, test_fraction: float = 0.25, seed: int = 0):
    n = len(X)
    n_test = int(round(n * test_fraction))
    order = np.random.default_rng(seed).permutation(n)
    te, tr = order[:n_test], order[n_test:]
    return X[tr], X[te], y[tr], y[te]
