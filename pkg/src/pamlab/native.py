"""Counted native float32 arithmetic.

The single place where the package multiplies, divides, takes square
roots, exponentials or logarithms of data with the hardware FPU. Standard
(baseline) code paths use these; piecewise affine paths must not.
"""
import numba as nb
import numpy as np

from . import instrument

_F32 = np.float32


def _n(*xs) -> int:
    return int(np.prod(np.broadcast_shapes(*(np.shape(x) for x in xs)), dtype=np.int64))


def mul(a, b):
    instrument.record("mul", _n(a, b))
    return np.multiply(a, b, dtype=_F32)


def div(a, b):
    instrument.record("div", _n(a, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.divide(a, b, dtype=_F32)


def sqrt(a):
    instrument.record("sqrt", _n(a))
    return np.sqrt(np.asarray(a, dtype=_F32))


def exp(a):
    instrument.record("exp", _n(a))
    with np.errstate(over="ignore"):
        return np.exp(np.asarray(a, dtype=_F32))


def log(a):
    instrument.record("log", _n(a))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(np.asarray(a, dtype=_F32))


def mul64(a, b):
    """float64 product, for reference computations in verification code."""
    instrument.record("mul", _n(a, b))
    return np.multiply(a, b, dtype=np.float64)


def div64(a, b):
    instrument.record("div", _n(a, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.divide(a, b, dtype=np.float64)


@nb.njit(cache=True)
def _matmul_kernel(a, b):
    nb_, m, k = a.shape
    n = b.shape[2]
    out = np.zeros((nb_, m, n), dtype=np.float32)
    for bi in range(nb_):
        for i in range(m):
            for j in range(n):
                acc = np.float32(0.0)
                for kk in range(k):
                    acc = acc + a[bi, i, kk] * b[bi, kk, j]
                out[bi, i, j] = acc
    return out


def matmul(a, b):
    """Batched (b, m, k) x (b, k, n) float32 product, reduced left to right over k."""
    instrument.record("mul", a.shape[0] * a.shape[1] * a.shape[2] * b.shape[2])
    return _matmul_kernel(a, b)
