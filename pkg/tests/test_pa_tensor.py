import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pamlab import pa_scalar as ps
from pamlab import pa_tensor as pt
from pamlab.float_codec import quantize_mantissa

from helpers import same_bits

f32 = np.float32
MODES = [pt.STANDARD, pt.PAM, pt.MatmulMode.quantized(7), pt.MatmulMode.quantized(3)]


def scalar_oracle(a, b, mode):
    a, b = mode.prepare(a), mode.prepare(b)
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float32)
    for i in range(m):
        for j in range(n):
            acc = f32(0.0)
            for t in range(k):
                p = f32(a[i, t] * b[t, j]) if mode.kind == "standard" else ps.pam(a[i, t], b[t, j])
                acc = f32(acc + p)
            out[i, j] = acc
    return out


finite = st.floats(-64, 64, width=32, allow_subnormal=False)
# magnitudes far from the flush-to-zero threshold (or exactly zero)
in_range = finite.filter(lambda v: v == 0 or abs(v) >= 2.0 ** -90)


@st.composite
def operand_pair(draw):
    m, k, n = (draw(st.integers(1, 8)) for _ in range(3))
    a = draw(arrays(np.float32, (m, k), elements=finite))
    b = draw(arrays(np.float32, (k, n), elements=finite))
    return a, b


@pytest.mark.parametrize("mode", MODES, ids=str)
@given(pair=operand_pair())
def test_matmul_matches_scalar_oracle(mode, pair):
    a, b = pair
    assert same_bits(pt.matmul(a, b, mode), scalar_oracle(a, b, mode))


def test_random_3x3_against_oracle(rng):
    a = rng.standard_normal((3, 3)).astype(np.float32)
    b = rng.standard_normal((3, 3)).astype(np.float32)
    assert same_bits(pt.matmul(a, b), scalar_oracle(a, b, pt.PAM))


def test_identity(rng):
    a = rng.standard_normal((5, 7)).astype(np.float32)
    assert same_bits(pt.matmul(a, np.eye(7, dtype=np.float32)), a)


@given(arrays(np.float32, (4, 6), elements=in_range),
       arrays(np.int64, (6, 3), elements=st.integers(-12, 12)),
       arrays(np.bool_, (6, 3)))
def test_powers_of_two_match_standard(b_left, exps, neg):
    p2 = np.where(neg, -1.0, 1.0) * np.exp2(exps.astype(np.float64))
    p2 = p2.astype(np.float32)
    assert same_bits(pt.matmul(b_left, p2, pt.PAM), pt.matmul(b_left, p2, pt.STANDARD))
    assert same_bits(pt.matmul(p2.T.copy(), b_left.T.copy(), pt.PAM),
                     pt.matmul(p2.T.copy(), b_left.T.copy(), pt.STANDARD))


def test_batched(rng):
    a = rng.standard_normal((2, 2, 2)).astype(np.float32)
    b = rng.standard_normal((2, 2, 2)).astype(np.float32)
    out = pt.batched_matmul(a, b)
    for i in range(2):
        assert same_bits(out[i], scalar_oracle(a[i], b[i], pt.PAM))
    assert same_bits(pt.batched_matmul(a[:1], b[:1])[0], pt.matmul(a[0], b[0]))
    b[1] = 0
    assert not pt.batched_matmul(a, b)[1].any()


def test_matmul_broadcast_and_batch_dims(rng):
    a = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
    w = rng.standard_normal((5, 6)).astype(np.float32)
    out = pt.matmul(a, w)
    assert out.shape == (2, 3, 4, 6)
    assert same_bits(out[1, 2], pt.matmul(a[1, 2], w))
    b = rng.standard_normal((2, 3, 5, 2)).astype(np.float32)
    assert same_bits(pt.matmul(a, b)[0, 1], pt.matmul(a[0, 1], b[0, 1]))


@pytest.mark.parametrize("sa, sb", [((2, 3), (4, 2)), ((3,), (3, 3)), ((2, 2, 3), (3, 3, 2))])
def test_shape_errors(sa, sb):
    with pytest.raises(pt.ShapeError):
        pt.matmul(np.zeros(sa, np.float32), np.zeros(sb, np.float32))


def test_quantized_mode_rounds_operands(rng):
    a = rng.standard_normal((4, 5)).astype(np.float32)
    b = rng.standard_normal((5, 3)).astype(np.float32)
    mode = pt.MatmulMode.quantized(4)
    ref = pt.matmul(quantize_mantissa(a, mode.fmt), quantize_mantissa(b, mode.fmt), pt.PAM)
    assert same_bits(pt.matmul(a, b, mode), ref)
    assert str(mode) == "pam4"
    with pytest.raises(ValueError):
        pt.MatmulMode("karatsuba")


def test_deterministic(rng):
    a = rng.standard_normal((33, 64)).astype(np.float32)
    b = rng.standard_normal((64, 17)).astype(np.float32)
    first = pt.matmul(a, b)
    for _ in range(3):
        assert same_bits(pt.matmul(a, b), first)


def test_ordered_sum():
    x = np.array([[1e8, 1.0, -1e8, 1.0]], dtype=np.float32)
    # left to right in float32: (1e8 + 1) rounds to 1e8, minus 1e8 is 0, plus 1
    assert pt.ordered_sum(x)[0] == 1.0
    assert pt.ordered_sum(x.T, axis=0, keepdims=True).shape == (1, 1)


def test_map_examples():
    assert pt.map_binary([1.5, 2.0], [1.5, 3.0], "pam").tolist() == [2.0, 6.0]
    assert pt.map_unary([4.0, 1.0], "pasqrt").tolist() == [2.0, 1.0]
    x = np.array([[1.3, -2.7], [5.1, 0.2]], dtype=np.float32)
    assert same_bits(pt.map_binary(x, np.float32(1.0), "pam"), x)
    assert pt.map_binary(x, [1.0, 2.0], "add").tolist() == (x + np.array([1, 2], np.float32)).tolist()


def test_map_domain_flag_and_shape_error():
    out = pt.map_unary([4.0, -1.0], "palog2")
    assert out.domain_error and np.isnan(out[1]) and out[0] == 2.0
    assert not pt.map_unary([4.0], "palog2").domain_error
    with pytest.raises(pt.ShapeError):
        pt.map_binary(np.zeros((2, 3)), np.zeros((2,)), "pam")


def test_conv2d_matches_direct(rng):
    x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    out = pt.conv2d(x, w, pt.STANDARD)
    ref = np.zeros((1, 3, 3, 3))
    for o in range(3):
        for i in range(3):
            for j in range(3):
                ref[0, o, i, j] = np.sum(x[0, :, i:i + 3, j:j + 3].astype(np.float64) * w[o])
    np.testing.assert_allclose(out, ref, rtol=1e-5, atol=1e-5)


@given(arrays(np.float32, st.lists(st.integers(0, 4), min_size=0, max_size=4).map(tuple),
              elements=st.floats(width=32, allow_nan=False)))
def test_serialization_round_trip(x):
    data = pt.tensor_to_bytes(x)
    assert int.from_bytes(data[:4], "little") == x.ndim
    back = pt.tensor_from_bytes(data)
    assert back.shape == x.shape and same_bits(back, x)


def test_checkpoint_round_trip(tmp_path, rng):
    tensors = {"w": rng.standard_normal((3, 4)).astype(np.float32), "empty": np.zeros((0, 2), np.float32),
               "scalar": np.float32(2.5)}
    pt.save_checkpoint(tmp_path / "c.bin", tensors)
    back = pt.load_checkpoint(tmp_path / "c.bin")
    assert list(back) == list(tensors)
    for k in tensors:
        assert same_bits(back[k], tensors[k])


def test_header_layout():
    buf = io.BytesIO()
    pt.write_tensor(buf, np.ones((2, 3), np.float32))
    raw = buf.getvalue()
    assert raw[:12] == bytes([2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0])
    assert len(raw) == 12 + 24
