"""Compiled PAM reduction kernels.

Each output element is reduced over the inner dimension strictly left to
right in float32, so results do not depend on blocking or thread count.
Only integer adds, shifts, masks and comparisons act on the operands.
"""
import numba as nb
import numpy as np

_MANT = 0x007FFFFF
_MAG = 0x7FFFFFFF
_EXP = 0x7F800000
_MIN_NORMAL = 0x00800000
_QNAN = 0x7FC00000
_ONE = 0x3F800000


@nb.njit(inline="always", cache=True)
def pam_word(a, b, min_biased, max_biased, max_mag):
    """PAM on two uint32 words held as int64; returns the result word."""
    sign = (a ^ b) & 0x80000000
    am = a & _MAG
    bm = b & _MAG
    if am > _EXP or bm > _EXP:
        return _QNAN
    if am == _EXP or bm == _EXP:
        if am < _MIN_NORMAL or bm < _MIN_NORMAL:
            return _QNAN
        return sign | _EXP
    if am < _MIN_NORMAL or bm < _MIN_NORMAL:
        return sign
    s = am + bm - _ONE
    e = s >> 23
    if e > max_biased:
        return sign | max_mag
    if e < min_biased:
        return sign
    return sign | s


@nb.njit(cache=True)
def pam_matmul(a_bits, b_bits, min_biased, max_biased, max_mag):
    """(batch, m, k) x (batch, k, n) PAM matmul on uint32 words."""
    nb_, m, k = a_bits.shape
    n = b_bits.shape[2]
    out = np.zeros((nb_, m, n), dtype=np.float32)
    words = np.empty(k, dtype=np.uint32)
    fw = words.view(np.float32)
    for bi in range(nb_):
        for i in range(m):
            for j in range(n):
                for kk in range(k):
                    words[kk] = pam_word(np.int64(a_bits[bi, i, kk]), np.int64(b_bits[bi, kk, j]),
                                         min_biased, max_biased, max_mag)
                acc = np.float32(0.0)
                for kk in range(k):
                    acc = acc + fw[kk]
                out[bi, i, j] = acc
    return out


@nb.njit(inline="always", cache=True)
def exact_factor_word(x, w, min_biased, max_biased):
    """Word of d pam(x, w) / dx = sign(w) * 2**(E_w + carry).

    Zero when the product was flushed, clamped or involves a zero/special
    operand (the function is locally constant there).
    """
    xm = x & _MAG
    wm = w & _MAG
    if xm >= _EXP or wm >= _EXP or wm < _MIN_NORMAL:
        return 0
    if xm < _MIN_NORMAL:
        # pam(., w) near zero: slope of the no-carry segment.
        e_out = wm >> 23
        if e_out > max_biased or e_out < min_biased:
            return 0
        return (w & 0x80000000) | (wm & _EXP)
    s = xm + wm - _ONE
    e_out = s >> 23
    if e_out > max_biased or e_out < min_biased:
        return 0
    carry = ((xm & _MANT) + (wm & _MANT)) >> 23
    e = (wm >> 23) + carry
    if e > 254:
        e = 254
    return (w & 0x80000000) | (e << 23)


@nb.njit(cache=True)
def exact_grad_lhs(a_bits, b_bits, g_bits, min_biased, max_biased, max_mag):
    """dA[bi,i,k] = sum_j pam(factor(A[i,k], B[k,j]), G[i,j]), j left to right."""
    nb_, m, k = a_bits.shape
    n = b_bits.shape[2]
    out = np.zeros((nb_, m, k), dtype=np.float32)
    words = np.empty(n, dtype=np.uint32)
    fw = words.view(np.float32)
    for bi in range(nb_):
        for i in range(m):
            for kk in range(k):
                x = np.int64(a_bits[bi, i, kk])
                for j in range(n):
                    f = exact_factor_word(x, np.int64(b_bits[bi, kk, j]), min_biased, max_biased)
                    words[j] = pam_word(f, np.int64(g_bits[bi, i, j]), min_biased, max_biased, max_mag)
                acc = np.float32(0.0)
                for j in range(n):
                    acc = acc + fw[j]
                out[bi, i, kk] = acc
    return out


@nb.njit(cache=True)
def exact_grad_rhs(a_bits, b_bits, g_bits, min_biased, max_biased, max_mag):
    """dB[bi,k,j] = sum_i pam(factor(B[k,j], A[i,k]), G[i,j]), i left to right."""
    nb_, m, k = a_bits.shape
    n = b_bits.shape[2]
    out = np.zeros((nb_, k, n), dtype=np.float32)
    words = np.empty(m, dtype=np.uint32)
    fw = words.view(np.float32)
    for bi in range(nb_):
        for kk in range(k):
            for j in range(n):
                x = np.int64(b_bits[bi, kk, j])
                for i in range(m):
                    f = exact_factor_word(x, np.int64(a_bits[bi, i, kk]), min_biased, max_biased)
                    words[i] = pam_word(f, np.int64(g_bits[bi, i, j]), min_biased, max_biased, max_mag)
                acc = np.float32(0.0)
                for i in range(m):
                    acc = acc + fw[i]
                out[bi, kk, j] = acc
    return out


@nb.njit(cache=True)
def ordered_sum_lastaxis(x):
    """Left-to-right float32 sum over the last axis of a 2-D array."""
    r, c = x.shape
    out = np.zeros(r, dtype=np.float32)
    for i in range(r):
        acc = np.float32(0.0)
        for j in range(c):
            acc = acc + x[i, j]
        out[i] = acc
    return out
