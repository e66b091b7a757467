"""Dense float32 tensors and PAM matrix kernels.

Tensors are plain C-contiguous ``np.float32`` arrays. Matrix products
reduce each output element left to right over the inner dimension in
float32, in every mode, so a Standard product and a PAM product of
power-of-two operands agree bit for bit.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Mapping

import numpy as np

from . import _kernels, native
from . import pa_scalar as ps
from .float_codec import FP32, PAFormat, quantize_mantissa, to_bits


class ShapeError(ValueError):
    pass


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32, order="C")


@dataclass(frozen=True)
class MatmulMode:
    """How scalar products inside a matmul are formed.

    ``kind`` is ``"standard"`` (native multiply), ``"pam"`` or
    ``"pam_quantized"``; the latter rounds both operands to ``fmt`` before
    every PAM. Accumulation is always float32 addition.
    """

    kind: str = "pam"
    fmt: PAFormat = FP32

    def __post_init__(self):
        if self.kind not in ("standard", "pam", "pam_quantized"):
            raise ValueError(f"unknown matmul mode {self.kind!r}")

    @classmethod
    def quantized(cls, fmt: PAFormat | int) -> "MatmulMode":
        if isinstance(fmt, int):
            fmt = PAFormat(mantissa_bits=fmt)
        return cls("pam_quantized", fmt)

    @property
    def is_pa(self) -> bool:
        return self.kind != "standard"

    def prepare(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "pam_quantized":
            return quantize_mantissa(x, self.fmt)
        return x

    def __str__(self):
        if self.kind == "pam_quantized":
            return f"pam{self.fmt.mantissa_bits}"
        return self.kind


STANDARD = MatmulMode("standard")
PAM = MatmulMode("pam")


def _fmt_args(fmt: PAFormat):
    return fmt.min_biased, fmt.max_biased, fmt.max_magnitude_bits


def _check_batched(a, b):
    if a.ndim != 3 or b.ndim != 3:
        raise ShapeError(f"batched matmul needs 3-d operands, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")


def batched_matmul(a, b, mode: MatmulMode = PAM) -> np.ndarray:
    """Independent ``a[i] @ b[i]`` for every batch index."""
    a, b = as_tensor(a), as_tensor(b)
    _check_batched(a, b)
    if mode.kind == "standard":
        return native.matmul(a, b)
    a, b = mode.prepare(a), mode.prepare(b)
    return _kernels.pam_matmul(to_bits(a), to_bits(b), *_fmt_args(mode.fmt))


def matmul(a, b, mode: MatmulMode = PAM) -> np.ndarray:
    """``C[i, j] = sum_k a[i, k] (*) b[k, j]`` with ``(*)`` chosen by ``mode``.

    Operands may carry matching leading batch dimensions; a 2-d right
    operand is shared across the batch of a higher-rank left operand.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-d")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    if b.ndim == 2:
        lead = a.shape[:-1]
        flat = a.reshape(1, math.prod(lead), a.shape[-1])
        return batched_matmul(flat, b[None], mode).reshape(*lead, b.shape[1])
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"batch dimensions differ: {a.shape} @ {b.shape}")
    lead = a.shape[:-2]
    nb = math.prod(lead)
    out = batched_matmul(a.reshape(nb, *a.shape[-2:]), b.reshape(nb, *b.shape[-2:]), mode)
    return out.reshape(*lead, a.shape[-2], b.shape[-1])


def exact_matmul_grads(a, b, grad, fmt: PAFormat = FP32):
    """Exact-derivative backward of a PAM matmul (3-d operands).

    Each scalar product contributes ``2**(E + carry) * grad`` with the
    sign of the other operand; the power of two is applied with PAM.
    """
    ab, bb, gb = to_bits(as_tensor(a)), to_bits(as_tensor(b)), to_bits(as_tensor(grad))
    args = _fmt_args(fmt)
    return (_kernels.exact_grad_lhs(ab, bb, gb, *args),
            _kernels.exact_grad_rhs(ab, bb, gb, *args))


def ordered_sum(x, axis: int = -1, keepdims: bool = False) -> np.ndarray:
    """float32 sum reduced strictly left to right along ``axis``."""
    x = np.moveaxis(as_tensor(x), axis, -1)
    lead = x.shape[:-1]
    out = _kernels.ordered_sum_lastaxis(np.ascontiguousarray(x.reshape(-1, x.shape[-1])))
    out = out.reshape(lead)
    if keepdims:
        out = np.expand_dims(out, axis)
    return out


class FlaggedArray(np.ndarray):
    """float32 array carrying a ``domain_error`` flag from an elementwise op."""

    domain_error = False

    def __array_finalize__(self, obj):
        self.domain_error = getattr(obj, "domain_error", False)


_BINARY = {
    "pam": ps.pam,
    "pad": ps.pad,
    "add": lambda a, b, fmt: np.add(a, b, dtype=np.float32),
    "sub": lambda a, b, fmt: np.subtract(a, b, dtype=np.float32),
}

_UNARY = {
    "paexp2": lambda x, fmt: ps.paexp2(x, fmt),
    "palog2": lambda x, fmt: ps.palog2(x, fmt, errors="nan"),
    "paexp": lambda x, fmt: ps.paexp(x, fmt),
    "palog": lambda x, fmt: ps.palog(x, fmt, errors="nan"),
    "pasqrt": lambda x, fmt: ps.pasqrt(x, fmt, errors="nan"),
    "neg": lambda x, fmt: np.negative(x),
    "quantize": lambda x, fmt: quantize_mantissa(x, fmt),
}


def _broadcastable(a_shape, b_shape):
    if len(b_shape) > len(a_shape):
        return False
    pad = tuple(1 for _ in range(len(a_shape) - len(b_shape))) + tuple(b_shape)
    return all(p == s or p == 1 for p, s in zip(pad, a_shape))


def map_binary(a, b, op: str, fmt: PAFormat = FP32) -> FlaggedArray:
    """Elementwise ``op`` in {pam, pad, add, sub}; ``b`` may broadcast into ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"cannot broadcast {b.shape} into {a.shape}")
    out = np.asarray(_BINARY[op](a, b, fmt), dtype=np.float32).view(FlaggedArray)
    out.domain_error = bool((np.isnan(out) & ~np.isnan(a) & ~np.isnan(b)).any())
    return out


def map_unary(a, op: str, fmt: PAFormat = FP32) -> FlaggedArray:
    """Elementwise unary op; domain errors become NaN and set ``domain_error``."""
    a = as_tensor(a)
    out = np.asarray(_UNARY[op](a, fmt), dtype=np.float32).view(FlaggedArray)
    out.domain_error = bool((np.isnan(out) & ~np.isnan(a)).any())
    return out


def unfold2d(x, kh: int, kw: int) -> np.ndarray:
    """im2col for ``(N, C, H, W)`` input with stride 1 and no padding.

    Returns ``(N, H', W', C*kh*kw)`` so a convolution is ``matmul`` with a
    ``(C*kh*kw, out_channels)`` weight.
    """
    x = as_tensor(x)
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    n, c, ho, wo = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho, wo, math.prod((c, kh, kw))))


def conv2d(x, w, mode: MatmulMode = PAM) -> np.ndarray:
    """Valid 2-d convolution ``(N,C,H,W) * (O,C,kh,kw) -> (N,O,H',W')`` via matmul."""
    o, c, kh, kw = w.shape
    cols = unfold2d(x, kh, kw)
    out = matmul(cols, as_tensor(w).reshape(o, math.prod((c, kh, kw))).T.copy(), mode)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


# Serialization: u32 rank, u32 dims..., then little-endian float32 payload.

def write_tensor(fp: BinaryIO, x) -> None:
    x = as_tensor(x)
    fp.write(struct.pack(f"<I{x.ndim}I", x.ndim, *x.shape))
    fp.write(x.astype("<f4").tobytes())


def read_tensor(fp: BinaryIO) -> np.ndarray:
    (rank,) = struct.unpack("<I", fp.read(4))
    shape = struct.unpack(f"<{rank}I", fp.read(rank << 2))
    count = math.prod(shape)
    data = np.frombuffer(fp.read(count << 2), dtype="<f4", count=count)
    return data.astype(np.float32).reshape(shape)


def tensor_to_bytes(x) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, x)
    return buf.getvalue()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(data))


def save_checkpoint(path, tensors: Mapping[str, np.ndarray]) -> None:
    """Named tensor table: u32 count, then per entry u32 name length, UTF-8 name, tensor."""
    with open(path, "wb") as fp:
        fp.write(struct.pack("<I", len(tensors)))
        for name, value in tensors.items():
            raw = name.encode("utf-8")
            fp.write(struct.pack("<I", len(raw)))
            fp.write(raw)
            write_tensor(fp, value)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, "rb") as fp:
        (count,) = struct.unpack("<I", fp.read(4))
        for _ in range(count):
            (n,) = struct.unpack("<I", fp.read(4))
            name = fp.read(n).decode("utf-8")
            out[name] = read_tensor(fp)
    return out
