"""Bit-level view of IEEE-754 binary32 values.

A normal binary32 number is ``(-1)**S * 2**E * (1 + M)`` with an 8-bit
exponent field biased by 127 and a 23-bit mantissa field ``M * 2**23``.
This module converts between that field view and the packed word, and
rounds mantissas to narrower widths to simulate formats like bfloat16.

Everything here works on numpy arrays as well as Python scalars.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

SIGN_MASK = 0x80000000
MAG_MASK = 0x7FFFFFFF
EXP_MASK = 0x7F800000
MANT_MASK = 0x007FFFFF
MANT_BITS = 23
BIAS = 127
ONE_BITS = 0x3F800000
MAX_FINITE_BITS = 0x7F7FFFFF
QNAN_BITS = 0x7FC00000


class FloatClass(enum.Enum):
    NORMAL = "normal"
    ZERO = "zero"
    DENORMAL = "denormal"
    INF = "inf"
    NAN = "nan"


class DenormalPolicy(enum.Enum):
    FLUSH_TO_ZERO = "flush_to_zero"


@dataclass(frozen=True)
class FloatParts:
    """Decomposed binary32 value.

    ``exponent`` is the unbiased field value ``Ebar - 127``; it is -127 for
    zeros and denormals and 128 for infinities and NaNs. ``mantissa`` is the
    exact fraction ``Mbar / 2**23``.
    """

    sign: int
    exponent: int
    mantissa: Fraction
    cls: FloatClass

    def __post_init__(self):
        if self.sign not in (0, 1):
            raise ValueError(f"sign must be 0 or 1, got {self.sign}")
        if not 0 <= self.mantissa < 1:
            raise ValueError(f"mantissa fraction outside [0, 1): {self.mantissa}")
        if (self.mantissa.numerator << MANT_BITS) % self.mantissa.denominator:
            raise ValueError("mantissa fraction needs more than 23 binary digits")
        if self.cls is FloatClass.NORMAL and not -126 <= self.exponent <= 127:
            raise ValueError(f"exponent {self.exponent} not encodable for a normal number")
        if self.cls is FloatClass.ZERO and self.mantissa != 0:
            raise ValueError("zero must have a zero mantissa")


@dataclass(frozen=True)
class PAFormat:
    """Numeric format simulated on top of binary32.

    Values keep ``mantissa_bits`` fractional mantissa bits and an unbiased
    exponent in ``[emin, emax]``; anything below ``emin`` is flushed to zero.
    """

    mantissa_bits: int = MANT_BITS
    emin: int = -126
    emax: int = 127
    denormal_policy: DenormalPolicy = DenormalPolicy.FLUSH_TO_ZERO

    def __post_init__(self):
        if not 0 <= self.mantissa_bits <= MANT_BITS:
            raise ValueError(f"mantissa_bits must be in [0, 23], got {self.mantissa_bits}")
        if not -126 <= self.emin < self.emax <= 127:
            raise ValueError(f"need -126 <= emin < emax <= 127, got {self.emin}, {self.emax}")

    @property
    def min_biased(self) -> int:
        return self.emin + BIAS

    @property
    def max_biased(self) -> int:
        return self.emax + BIAS

    @property
    def max_magnitude_bits(self) -> int:
        """Bit pattern of the largest finite magnitude representable in this format."""
        keep = ((1 << self.mantissa_bits) - 1) << (MANT_BITS - self.mantissa_bits)
        return (self.max_biased << MANT_BITS) | keep


FP32 = PAFormat()
BF16 = PAFormat(mantissa_bits=7)


def to_bits(x) -> np.ndarray:
    """Reinterpret float32 values as uint32 words (no rounding beyond the float32 cast)."""
    return np.asarray(x, dtype=np.float32).view(np.uint32)


def from_bits(bits) -> np.ndarray:
    return np.asarray(bits, dtype=np.uint32).view(np.float32)


def _like_input(result: np.ndarray, x):
    # Scalars in, numpy scalars out.
    if np.ndim(x) == 0:
        return result[()]
    return result


def fields(x):
    """Split float32 values into (sign, biased exponent, mantissa) integer arrays."""
    b = to_bits(x)
    return b >> 31, (b >> MANT_BITS) & 0xFF, b & MANT_MASK


def decompose_word(word: int) -> FloatParts:
    word = int(word) & 0xFFFFFFFF
    sign = word >> 31
    ebar = (word >> MANT_BITS) & 0xFF
    mbar = word & MANT_MASK
    mant = Fraction(mbar, 1 << MANT_BITS)
    if ebar == 0xFF:
        cls = FloatClass.NAN if mbar else FloatClass.INF
    elif ebar == 0:
        cls = FloatClass.DENORMAL if mbar else FloatClass.ZERO
    else:
        cls = FloatClass.NORMAL
    return FloatParts(sign, ebar - BIAS, mant, cls)


def decompose(x) -> FloatParts:
    """Decompose a single float (rounded to binary32 first)."""
    return decompose_word(int(to_bits(np.float32(x))))


def compose_word(p: FloatParts) -> int:
    mbar = (p.mantissa.numerator << MANT_BITS) // p.mantissa.denominator
    if p.cls is FloatClass.NORMAL:
        ebar = p.exponent + BIAS
    elif p.cls in (FloatClass.ZERO, FloatClass.DENORMAL):
        ebar = 0
    elif p.cls is FloatClass.INF:
        ebar, mbar = 0xFF, 0
    else:
        ebar = 0xFF
        mbar = mbar or (QNAN_BITS & MANT_MASK)
    return (p.sign << 31) | (ebar << MANT_BITS) | mbar


def compose(p: FloatParts) -> np.float32:
    return from_bits(np.uint32(compose_word(p)))[()]


def classify(x) -> np.ndarray:
    """Vectorised class codes: 0 zero, 1 denormal, 2 normal, 3 inf, 4 nan."""
    _, e, m = fields(x)
    out = np.full(e.shape, 2, dtype=np.int8)
    out[(e == 0) & (m == 0)] = 0
    out[(e == 0) & (m != 0)] = 1
    out[(e == 0xFF) & (m == 0)] = 3
    out[(e == 0xFF) & (m != 0)] = 4
    return out


def quantize_mantissa(x, fmt: PAFormat = FP32):
    """Round float32 values to ``fmt`` (round-to-nearest-even on the mantissa).

    A mantissa that rounds up past all-ones carries into the exponent. The
    exponent is then clamped into ``[fmt.emin, fmt.emax]``: too large gives
    the largest magnitude of the format, too small (including denormal
    inputs) gives a signed zero. NaN and infinity pass through.
    """
    b = to_bits(x).astype(np.uint32, copy=True)
    sign = b & SIGN_MASK
    mag = b & MAG_MASK
    special = mag >= EXP_MASK

    drop = MANT_BITS - fmt.mantissa_bits
    if drop:
        half = np.uint32((1 << (drop - 1)) - 1)
        lsb = (mag >> np.uint32(drop)) & np.uint32(1)
        rounded = np.where(special, mag, mag + half + lsb)
        rounded = (rounded >> np.uint32(drop)) << np.uint32(drop)
    else:
        rounded = mag
    ebar = rounded >> np.uint32(MANT_BITS)
    rounded = np.where(ebar > fmt.max_biased, np.uint32(fmt.max_magnitude_bits), rounded)
    rounded = np.where(ebar < fmt.min_biased, np.uint32(0), rounded)
    out = np.where(special, b, sign | rounded).astype(np.uint32)
    return _like_input(from_bits(out), x)
