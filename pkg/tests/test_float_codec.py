from fractions import Fraction

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from pamlab.float_codec import (BF16, FP32, FloatClass, FloatParts, PAFormat, classify, compose, compose_word,
                                decompose, decompose_word, fields, from_bits, quantize_mantissa, to_bits)

from helpers import normal_words, same_bits


@pytest.mark.parametrize("x, sign, exp, mant", [
    (1.5, 0, 0, Fraction(1, 2)),
    (-0.75, 1, -1, Fraction(1, 2)),
    (2.0, 0, 1, Fraction(0)),
])
def test_decompose_examples(x, sign, exp, mant):
    p = decompose(x)
    assert (p.sign, p.exponent, p.mantissa, p.cls) == (sign, exp, mant, FloatClass.NORMAL)


def test_decompose_zero_and_specials():
    assert decompose(0.0).cls is FloatClass.ZERO and decompose(0.0).sign == 0
    assert decompose(-0.0).sign == 1
    assert decompose(np.inf).cls is FloatClass.INF
    assert decompose(np.nan).cls is FloatClass.NAN
    assert decompose(from_bits(np.uint32(1))).cls is FloatClass.DENORMAL


@pytest.mark.parametrize("parts, value", [
    (FloatParts(0, 1, Fraction(0), FloatClass.NORMAL), 2.0),
    (FloatParts(0, 0, Fraction(1, 2), FloatClass.NORMAL), 1.5),
    (FloatParts(1, -1, Fraction(1, 2), FloatClass.NORMAL), -0.75),
])
def test_compose_examples(parts, value):
    assert compose(parts) == np.float32(value)


def test_parts_validation():
    with pytest.raises(ValueError):
        FloatParts(2, 0, Fraction(0), FloatClass.NORMAL)
    with pytest.raises(ValueError):
        FloatParts(0, 0, Fraction(1), FloatClass.NORMAL)
    with pytest.raises(ValueError):
        FloatParts(0, 0, Fraction(1, 3), FloatClass.NORMAL)
    with pytest.raises(ValueError):
        FloatParts(0, 200, Fraction(0), FloatClass.NORMAL)
    with pytest.raises(ValueError):
        PAFormat(mantissa_bits=24)


@given(st.integers(0, 0xFFFFFFFF))
def test_word_round_trip(word):
    p = decompose_word(word)
    back = compose_word(p)
    if p.cls is FloatClass.NAN:
        assert (back >> 23) & 0xFF == 0xFF and back & 0x7FFFFF
    else:
        assert back == word


def test_fields_vectorised():
    s, e, m = fields(np.array([1.5, -0.75], dtype=np.float32))
    assert s.tolist() == [0, 1] and e.tolist() == [127, 126] and m.tolist() == [1 << 22, 1 << 22]


def test_classify_codes():
    x = np.array([0.0, from_bits(np.uint32(5)), 1.0, np.inf, np.nan], dtype=np.float32)
    assert classify(x).tolist() == [0, 1, 2, 3, 4]


def test_quantize_examples():
    assert quantize_mantissa(np.float32(1.5625), PAFormat(4)) == np.float32(1.5625)
    assert quantize_mantissa(np.float32(1 + 2.0 ** -23), PAFormat(4)) == np.float32(1.0)
    # tie rounds to even: 1 + 2^-5 + 2^-6 sits halfway between 1+2^-5... at 4 bits -> 1.0625
    assert quantize_mantissa(np.float32(1 + 2.0 ** -5), PAFormat(4)) == np.float32(1.0)
    assert quantize_mantissa(np.float32(1 + 3 * 2.0 ** -5), PAFormat(4)) == np.float32(1.125)


def test_quantize_carry_and_clamp():
    just_below_two = from_bits(np.uint32(0x3FFFFFFF))
    assert quantize_mantissa(just_below_two, BF16) == np.float32(2.0)
    big = from_bits(np.uint32(0x7F7FFFFF))
    assert to_bits(quantize_mantissa(big, BF16)) == BF16.max_magnitude_bits
    assert quantize_mantissa(from_bits(np.uint32(3)), BF16) == 0
    assert np.isnan(quantize_mantissa(np.float32(np.nan), BF16))
    assert quantize_mantissa(np.float32(-np.inf), BF16) == -np.inf


def test_quantize_full_width_is_identity(rng):
    w = rng.integers(0x00800000, 0x7F800000, 10000, dtype=np.uint32)
    x = from_bits(w)
    assert same_bits(quantize_mantissa(x, FP32), x)


def test_quantize_matches_torch_bfloat16(rng):
    # Independent oracle: torch's float32 -> bfloat16 conversion (round to nearest even).
    w = rng.integers(0x00800000, 0x7F000000, 200000, dtype=np.uint32)
    w |= rng.integers(0, 2, w.size, dtype=np.uint32) << 31
    x = from_bits(w)
    ours = quantize_mantissa(x, BF16)
    ref = torch.from_numpy(x.copy()).to(torch.bfloat16).to(torch.float32).numpy()
    assert same_bits(ours, ref)


@given(normal_words(2, 250), st.integers(1, 22))
def test_quantize_is_nearest(word, nbits):
    x = from_bits(np.uint32(word))[()]
    q = quantize_mantissa(x, PAFormat(nbits))
    # q is representable and no other representable value is strictly closer
    step = 2.0 ** (decompose(q).exponent - nbits) if q != 0 else 0
    assert (int(to_bits(q)) & ((1 << (23 - nbits)) - 1)) == 0
    assert abs(float(q) - float(x)) <= step / 2 + 1e-300 or decompose(q).exponent != decompose(x).exponent


@given(normal_words(2, 250), st.integers(1, 23))
def test_quantize_idempotent(word, nbits):
    x = from_bits(np.uint32(word))[()]
    fmt = PAFormat(nbits)
    q = quantize_mantissa(x, fmt)
    assert same_bits(quantize_mantissa(q, fmt), q)
