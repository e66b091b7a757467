"""Shared strategies and oracles for the test-suite."""
import numpy as np
from hypothesis import strategies as st

from pamlab.float_codec import from_bits


def normal_words(exp_lo=1, exp_hi=254, signed=True):
    sign = st.integers(0, 1) if signed else st.just(0)
    return st.builds(lambda s, e, m: (s << 31) | (e << 23) | m,
                     sign, st.integers(exp_lo, exp_hi), st.integers(0, (1 << 23) - 1))


def normals(exp_lo=1, exp_hi=254, signed=True):
    return normal_words(exp_lo, exp_hi, signed).map(lambda w: from_bits(np.uint32(w))[()])


def bits(x):
    return np.asarray(x, dtype=np.float32).view(np.uint32)


def same_bits(a, b):
    return np.array_equal(bits(a), bits(b))


def pam_fraction_oracle(a, b):
    """PAM evaluated from the field definition with exact rationals (normal, in-range inputs)."""
    from fractions import Fraction
    from pamlab.float_codec import decompose
    pa, pb = decompose(a), decompose(b)
    m = pa.mantissa + pb.mantissa
    carry = 1 if m >= 1 else 0
    e = pa.exponent + pb.exponent + carry
    mant = m - carry
    val = (1 + mant) * (Fraction(2) ** e)
    return -val if pa.sign ^ pb.sign else val
