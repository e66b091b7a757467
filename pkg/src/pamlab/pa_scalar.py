"""Piecewise affine arithmetic on binary32 values.

All functions are elementwise over numpy arrays (scalars in give numpy
scalars out) and use only integer addition, shifts, masks and comparisons
on the bit patterns; no floating point multiply, divide or square root is
executed.

Special values follow one policy throughout:

* NaN in gives NaN out; ``inf * 0`` and ``0 / 0`` give NaN.
* Exponent overflow clamps to the largest finite magnitude of the format.
* Exponent underflow and denormal inputs flush to a signed zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .float_codec import (
    BIAS, EXP_MASK, FP32, MAG_MASK, MANT_BITS, MANT_MASK, ONE_BITS, QNAN_BITS,
    SIGN_MASK, PAFormat, _like_input, fields, from_bits, quantize_mantissa, to_bits,
)

LOG2E = np.float32(1.4426950408889634)
LN2 = np.float32(0.6931471805599453)
TWO = np.float32(2.0)


class PADomainError(ValueError):
    """Raised when a logarithm-based op gets a non-positive or non-normal input."""


@dataclass(frozen=True)
class PAScalarConfig:
    fmt: PAFormat = FP32
    count_native_ops: bool = True


def _compose(sign, biased, mant, fmt: PAFormat):
    # biased/mant are int64; clamp the exponent into the format's range.
    bits = (biased << MANT_BITS) | mant
    bits = np.where(biased > fmt.max_biased, fmt.max_magnitude_bits, bits)
    bits = np.where(biased < fmt.min_biased, 0, bits)
    return sign | bits


def _out(res, *inputs):
    if all(np.ndim(x) == 0 for x in inputs):
        return res[()]
    return res


def _specials_mul(a_bits, b_bits):
    a_mag = a_bits & MAG_MASK
    b_mag = b_bits & MAG_MASK
    a_nan, b_nan = a_mag > EXP_MASK, b_mag > EXP_MASK
    a_inf, b_inf = a_mag == EXP_MASK, b_mag == EXP_MASK
    # Denormals count as zero.
    a_zero, b_zero = a_mag < 0x00800000, b_mag < 0x00800000
    nan = a_nan | b_nan | (a_inf & b_zero) | (a_zero & b_inf)
    inf = (a_inf | b_inf) & ~nan
    zero = (a_zero | b_zero) & ~nan & ~inf
    return nan, inf, zero


def _finish(out, sign, nan, inf, zero):
    out = np.where(zero, sign, out)
    out = np.where(inf, sign | EXP_MASK, out)
    out = np.where(nan, QNAN_BITS, out)
    return out.astype(np.uint32)


def pam(a, b, fmt: PAFormat = FP32):
    """Piecewise affine multiplication.

    Adds exponents and mantissa fractions; a mantissa sum of one or more
    carries into the exponent. Exact whenever either mantissa is zero.

    >>> float(pam(1.5, 1.5)), float(pam(1.25, 1.25)), float(pam(-1.5, 1.5))
    (2.0, 1.5, -2.0)
    """
    a_bits = to_bits(a).astype(np.int64)
    b_bits = to_bits(b).astype(np.int64)
    sa, ea, ma = a_bits >> 31, (a_bits >> MANT_BITS) & 0xFF, a_bits & MANT_MASK
    sb, eb, mb = b_bits >> 31, (b_bits >> MANT_BITS) & 0xFF, b_bits & MANT_MASK
    sign = (sa ^ sb) << 31
    msum = ma + mb
    carry = msum >> MANT_BITS
    biased = ea + eb - BIAS + carry
    out = _compose(sign, biased, msum & MANT_MASK, fmt)
    res = _finish(out, sign, *_specials_mul(a_bits, b_bits))
    return _out(from_bits(res), a, b)


def pam_int_add(a, b, fmt: PAFormat = FP32):
    """PAM computed by adding the binary32 words as integers.

    The magnitudes are summed and the bias word ``0x3F800000`` subtracted;
    the mantissa overflow then carries into the exponent by itself.

    >>> hex(int(to_bits(pam_int_add(1.5, 1.5))))
    '0x40000000'
    """
    a_bits = to_bits(a).astype(np.int64)
    b_bits = to_bits(b).astype(np.int64)
    sign = (a_bits ^ b_bits) & SIGN_MASK
    s = (a_bits & MAG_MASK) + (b_bits & MAG_MASK) - ONE_BITS
    biased = s >> MANT_BITS  # arithmetic shift: negative sums underflow
    s = np.where(biased > fmt.max_biased, fmt.max_magnitude_bits, s)
    s = np.where(biased < fmt.min_biased, 0, s)
    res = _finish(sign | s, sign, *_specials_mul(a_bits, b_bits))
    return _out(from_bits(res), a, b)


def _specials_div(a_bits, b_bits):
    a_mag = a_bits & MAG_MASK
    b_mag = b_bits & MAG_MASK
    a_nan, b_nan = a_mag > EXP_MASK, b_mag > EXP_MASK
    a_inf, b_inf = a_mag == EXP_MASK, b_mag == EXP_MASK
    a_zero, b_zero = a_mag < 0x00800000, b_mag < 0x00800000
    nan = a_nan | b_nan | (a_zero & b_zero) | (a_inf & b_inf)
    inf = a_inf & ~nan
    clamp = b_zero & ~nan & ~inf
    zero = (a_zero | b_inf) & ~nan & ~clamp
    return nan, inf, clamp, zero


def pad(a, b, fmt: PAFormat = FP32):
    """Piecewise affine division, the exact inverse of :func:`pam`.

    A borrow is taken when ``M_a < M_b`` (strictly), so ``pad(x, x) == 1``.
    Dividing a nonzero finite value by zero gives the largest finite
    magnitude with the XOR sign; ``0 / 0`` is NaN.

    >>> float(pad(2.0, 1.5)), float(pad(1.0, 1.5))
    (1.5, 0.75)
    """
    a_bits = to_bits(a).astype(np.int64)
    b_bits = to_bits(b).astype(np.int64)
    sa, ea, ma = a_bits >> 31, (a_bits >> MANT_BITS) & 0xFF, a_bits & MANT_MASK
    sb, eb, mb = b_bits >> 31, (b_bits >> MANT_BITS) & 0xFF, b_bits & MANT_MASK
    sign = (sa ^ sb) << 31
    borrow = (ma < mb).astype(np.int64)
    biased = ea - eb + BIAS - borrow
    mant = (ma - mb + (borrow << MANT_BITS)) & MANT_MASK
    out = _compose(sign, biased, mant, fmt)
    nan, inf, clamp, zero = _specials_div(a_bits, b_bits)
    out = np.where(clamp, sign | fmt.max_magnitude_bits, out)
    res = _finish(out, sign, nan, inf, zero)
    return _out(from_bits(res), a, b)


def pad_int_sub(a, b, fmt: PAFormat = FP32):
    """PAD as an integer subtraction of the words plus the bias word."""
    a_bits = to_bits(a).astype(np.int64)
    b_bits = to_bits(b).astype(np.int64)
    sign = (a_bits ^ b_bits) & SIGN_MASK
    s = (a_bits & MAG_MASK) - (b_bits & MAG_MASK) + ONE_BITS
    biased = s >> MANT_BITS
    s = np.where(biased > fmt.max_biased, fmt.max_magnitude_bits, s)
    s = np.where(biased < fmt.min_biased, 0, s)
    nan, inf, clamp, zero = _specials_div(a_bits, b_bits)
    s = np.where(clamp, fmt.max_magnitude_bits, s)
    res = _finish(sign | s, sign, nan, inf, zero)
    return _out(from_bits(res), a, b)


def _narrow(x, fmt: PAFormat):
    return x if fmt.mantissa_bits == MANT_BITS else quantize_mantissa(x, fmt)


def paexp2(a, fmt: PAFormat = FP32):
    """``2**floor(a) * (1 + a - floor(a))``, built by writing the exponent field.

    >>> float(paexp2(1.5)), float(paexp2(-0.5))
    (3.0, 0.75)
    """
    x = np.asarray(a, dtype=np.float32)
    fl = np.floor(x)
    with np.errstate(invalid="ignore"):
        frac = x - fl
        # 1 + frac rounds to nearest even; a round up to 2.0 carries into the exponent.
        one_frac = to_bits(np.float32(1.0) + frac).astype(np.int64)
    shift = np.clip(np.nan_to_num(fl, nan=0.0, posinf=0.0, neginf=0.0), -512, 512)
    s = one_frac + (shift.astype(np.int64) << MANT_BITS)
    biased = s >> MANT_BITS
    s = np.where(biased > fmt.max_biased, fmt.max_magnitude_bits, s)
    s = np.where(biased < fmt.min_biased, 0, s)
    s = np.where(x == np.inf, fmt.max_magnitude_bits, s)
    s = np.where(x == -np.inf, 0, s)
    s = np.where(np.isnan(x), QNAN_BITS, s)
    return _like_input(_narrow(from_bits(s.astype(np.uint32)), fmt), a)


def _domain(a_bits, errors: str, name: str):
    mag = a_bits & MAG_MASK
    bad = (a_bits >> 31 == 1) | (mag < 0x00800000) | (mag >= EXP_MASK)
    if errors == "raise" and np.any(bad):
        raise PADomainError(f"{name} needs positive normal finite inputs")
    return bad


def palog2(a, fmt: PAFormat = FP32, *, errors: str = "raise"):
    """``E + M`` for ``a = 2**E * (1 + M) > 0``.

    The exact value is rounded to nearest even when it needs more than 24
    significant bits. Invalid inputs raise :class:`PADomainError`, or give
    NaN with ``errors="nan"``.

    >>> float(palog2(3.0)), float(palog2(0.75))
    (1.5, -0.5)
    """
    bits = to_bits(a).astype(np.int64)
    bad = _domain(bits, errors, "palog2")
    e = ((bits >> MANT_BITS) & 0xFF) - BIAS
    m = np.ldexp((bits & MANT_MASK).astype(np.float64), -MANT_BITS)
    out = (e + m).astype(np.float32)
    out = np.where(bad, np.float32(np.nan), out)
    return _like_input(_narrow(out, fmt), a)


def paexp(a, fmt: PAFormat = FP32):
    return paexp2(pam(LOG2E, a, fmt), fmt)


def palog(a, fmt: PAFormat = FP32, *, errors: str = "raise"):
    return pad(palog2(a, fmt, errors=errors), LOG2E, fmt)


def pasqrt(a, fmt: PAFormat = FP32, *, errors: str = "raise"):
    """``paexp2(palog2(a) / 2)`` with piecewise affine halving.

    Zero and subnormal inputs (flushed to zero) give a zero of the same sign.

    >>> float(pasqrt(4.0)), float(pasqrt(2.0)), float(pasqrt(0.0))
    (2.0, 1.5, 0.0)
    """
    bits = to_bits(a).astype(np.int64)
    zero = (bits & MAG_MASK) < 0x00800000
    if not np.any(zero):
        return paexp2(pad(palog2(a, fmt, errors=errors), TWO, fmt), fmt)
    safe = from_bits(np.where(zero, np.int64(0x3F800000), bits).astype(np.uint32))
    out = paexp2(pad(palog2(safe, fmt, errors=errors), TWO, fmt), fmt)
    out = np.where(zero, from_bits((bits & ~MAG_MASK).astype(np.uint32)), out)
    return _like_input(out, a)


def pam_compensated(a, b, alpha, fmt: PAFormat = FP32):
    """``pam(pam(a, b), alpha)``; ``alpha`` rescales away PAM's downward bias."""
    return pam(pam(a, b, fmt), alpha, fmt)


def pow2_factor(sign, exponent, fmt: PAFormat = FP32):
    """``(-1)**sign * 2**exponent`` as float32, clamped/flushed like PAM.

    Used by the exact derivative rules, which scale by powers of two.
    """
    e = np.asarray(exponent, dtype=np.int64) + BIAS
    bits = np.where(e > fmt.max_biased, fmt.max_biased << MANT_BITS, e << MANT_BITS)
    bits = np.where(e < fmt.min_biased, 0, bits)
    bits = bits | (np.asarray(sign, dtype=np.int64) << 31)
    return from_bits(bits.astype(np.uint32))


def segment_ids_mul(a, b):
    """Segment identifiers of ``pam(a, b)``: exponents and the carry bit."""
    _, ea, ma = fields(a)
    _, eb, mb = fields(b)
    carry = (ma.astype(np.int64) + mb) >> MANT_BITS
    return np.stack(np.broadcast_arrays(ea, eb, carry)).astype(np.int16)


def segment_ids_div(a, b):
    _, ea, ma = fields(a)
    _, eb, mb = fields(b)
    return np.stack(np.broadcast_arrays(ea, eb, ma < mb)).astype(np.int16)
