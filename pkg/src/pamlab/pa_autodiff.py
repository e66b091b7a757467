"""Reverse-mode differentiation over piecewise affine primitives.

Operations are recorded on the active :class:`Tape` while it is open.
:func:`backward` walks the tape in reverse and applies, for each node,
either the *exact* derivative of the piecewise affine function (piecewise
constant, powers of two) or the *approximate* derivative (the analytic
derivative of the function being approximated, evaluated with PA ops).
The choice is made per group of nodes: ``matmul`` nodes use
``modes.matmul``; nodes recorded inside ``tape.group("softmax")`` etc.
use the mode of that group.

Every backward rule of a PA op uses only PA ops, additions, comparisons
and selections. Standard ops (``mul``, ``exp``...) go through
:mod:`pamlab.native` and are counted.

Example::

    x = Var(np.float32(1.5))
    with Tape() as tape:
        y = pam(x, 1.5)
    grads = backward(tape, y)
    grads[x]        # 1.0 with exact derivatives
"""
from __future__ import annotations

import enum
import hashlib
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import native
from . import pa_scalar as ps
from . import pa_tensor as pt
from .float_codec import BIAS, FP32, MANT_BITS, PAFormat, fields, quantize_mantissa, to_bits


class Mode(enum.Enum):
    EXACT = "exact"
    APPROX = "approx"


@dataclass(frozen=True)
class DerivativeModes:
    """Derivative kind per primitive group; loss defaults to exact, the rest approximate."""

    matmul: Mode = Mode.APPROX
    softmax: Mode = Mode.APPROX
    layernorm: Mode = Mode.APPROX
    loss: Mode = Mode.EXACT
    default: Mode = Mode.APPROX

    @classmethod
    def all(cls, mode: Mode) -> "DerivativeModes":
        return cls(mode, mode, mode, mode, mode)

    def for_group(self, group: str | None) -> Mode:
        return getattr(self, group) if group in ("matmul", "softmax", "layernorm", "loss") else self.default


class GraphError(RuntimeError):
    pass


class Var:
    """A value in the graph. Leaves with ``requires_grad`` collect gradients."""

    __slots__ = ("value", "node", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = True, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float32)
        self.node = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.value!r}{', ' + self.name if self.name else ''})"

    # Additive operators only: products go through pam()/mul() explicitly.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return neg(self)


@dataclass
class Node:
    op: str
    inputs: tuple
    output: Var
    backward: Callable
    saved: dict = field(default_factory=dict)
    group: str | None = None
    segment: np.ndarray | None = None


_state = threading.local()


def _active() -> "Tape | None":
    return getattr(_state, "tape", None)


class Tape:
    """Records nodes in execution order; usable as a context manager.

    With ``track_segments`` each PA node also stores the discrete indices
    (exponents, carries, floors, ReLU masks) that select its affine piece.
    """

    def __init__(self, track_segments: bool = False):
        self.nodes: list[Node] = []
        self.track_segments = track_segments
        self._groups: list[str] = []
        self._prev = None

    def __enter__(self):
        self._prev = _active()
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev

    @contextmanager
    def group(self, name: str):
        self._groups.append(name)
        try:
            yield
        finally:
            self._groups.pop()

    @property
    def current_group(self):
        return self._groups[-1] if self._groups else None

    def __len__(self):
        return len(self.nodes)

    def segment_signature(self) -> bytes:
        """Digest of all node segment indices; equal digests mean the same affine piece."""
        h = hashlib.blake2b(digest_size=16)
        for n in self.nodes:
            h.update(n.op.encode())
            if n.segment is not None:
                h.update(np.ascontiguousarray(n.segment).tobytes())
        return h.digest()

    def segments(self) -> list:
        return [n.segment for n in self.nodes]


@contextmanager
def group(name: str):
    """Tag nodes recorded in the block with a derivative group (no-op without a tape)."""
    tape = _active()
    if tape is None:
        yield
    else:
        with tape.group(name):
            yield


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x, requires_grad=False)


def _record(op, inputs, value, bw, saved=None, segment=None, group_name=None) -> Var:
    out = Var(value, requires_grad=any(v.requires_grad for v in inputs))
    tape = _active()
    if tape is not None:
        node = Node(op, tuple(inputs), out, bw, saved or {},
                    group_name or tape.current_group,
                    segment if tape.track_segments else None)
        out.node = node
        tape.nodes.append(node)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back to ``shape`` (additions only)."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = pt.ordered_sum(g, axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = pt.ordered_sum(g, axis=ax, keepdims=True)
    return g


def _tracking() -> bool:
    tape = _active()
    return tape is not None and tape.track_segments


# ---------------------------------------------------------------- additive ops

def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)

    def bw(node, g, mode):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _record("add", (a, b), np.add(a.value, b.value, dtype=np.float32), bw)


def sub(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)

    def bw(node, g, mode):
        return _unbroadcast(g, a.shape), _unbroadcast(np.negative(g), b.shape)
    return _record("sub", (a, b), np.subtract(a.value, b.value, dtype=np.float32), bw)


def neg(a) -> Var:
    a = _wrap(a)
    return _record("neg", (a,), np.negative(a.value), lambda node, g, mode: (np.negative(g),))


def sum(a, axis=None, keepdims: bool = False) -> Var:  # noqa: A001 - mirrors numpy
    """Left-to-right float32 sum over one axis (or all elements)."""
    a = _wrap(a)
    if axis is None:
        value = pt.ordered_sum(a.value.reshape(-1))
        if keepdims:
            value = value.reshape(tuple(1 for _ in range(a.value.ndim)))
    else:
        value = pt.ordered_sum(a.value, axis=axis, keepdims=keepdims)

    def bw(node, g, mode):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.ascontiguousarray(np.broadcast_to(g, a.shape), dtype=np.float32),)
    return _record("sum", (a,), value, bw)


def reshape(a, shape) -> Var:
    a = _wrap(a)
    return _record("reshape", (a,), a.value.reshape(shape),
                   lambda node, g, mode: (g.reshape(a.shape),))


def transpose(a, axes) -> Var:
    a = _wrap(a)
    inv = np.argsort(axes)
    return _record("transpose", (a,), np.ascontiguousarray(a.value.transpose(axes)),
                   lambda node, g, mode: (np.ascontiguousarray(g.transpose(inv)),))


def take_rows(table, ids) -> Var:
    """Embedding lookup ``table[ids]``; the gradient scatter-adds into the table."""
    table = _wrap(table)
    ids = np.asarray(ids)

    def bw(node, g, mode):
        out = np.zeros(table.shape, dtype=np.float32)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (out,)
    return _record("take_rows", (table,), table.value[ids], bw)


def relu(a) -> Var:
    a = _wrap(a)
    mask = ~(a.value <= 0)              # NaN passes through
    return _record("relu", (a,), np.where(mask, a.value, np.float32(0)),
                   lambda node, g, mode: (np.where(mask, g, np.float32(0)),),
                   segment=mask.astype(np.int8) if _tracking() else None)


def maximum_const(a, floor) -> Var:
    """``max(a, floor)`` for a constant floor; gradient passes where ``a > floor``."""
    a = _wrap(a)
    floor = np.float32(floor)
    mask = ~(a.value <= floor)          # NaN passes through
    return _record("maximum_const", (a,), np.where(mask, a.value, floor),
                   lambda node, g, mode: (np.where(mask, g, np.float32(0)),),
                   segment=mask.astype(np.int8) if _tracking() else None)


def max(a, axis: int = -1, keepdims: bool = True) -> Var:  # noqa: A001
    """Maximum along ``axis``; the gradient goes to the first maximal entry."""
    a = _wrap(a)
    idx = np.argmax(a.value, axis=axis)
    value = np.take_along_axis(a.value, np.expand_dims(idx, axis), axis)
    if not keepdims:
        value = np.squeeze(value, axis)

    def bw(node, g, mode):
        if not keepdims:
            g = np.expand_dims(g, axis)
        out = np.zeros(a.shape, dtype=np.float32)
        np.put_along_axis(out, np.expand_dims(idx, axis), g, axis)
        return (out,)
    return _record("max", (a,), value, bw, segment=idx.astype(np.int16) if _tracking() else None)


def select(mask, a) -> Var:
    """Keep ``a`` where ``mask`` is true, zero elsewhere."""
    a = _wrap(a)
    mask = np.asarray(mask, dtype=bool)
    return _record("select", (a,), np.where(mask, a.value, np.float32(0)),
                   lambda node, g, mode: (_unbroadcast(np.where(mask, g, np.float32(0)), a.shape),))


# --------------------------------------------------------- PA primitive rules

def exact_mul_factor(x, w, fmt: PAFormat = FP32) -> np.ndarray:
    """``d pam(x, w) / dx`` = ``sign(w) * 2**(E_w + carry)``, zero where pam is locally constant."""
    x = np.asarray(x, dtype=np.float32)
    w = np.asarray(w, dtype=np.float32)
    _, ex, mx = fields(x)
    sw, ew, mw = fields(w)
    carry = (mx.astype(np.int64) + mw) >> MANT_BITS
    f = ps.pow2_factor(sw, ew.astype(np.int64) - BIAS + carry, fmt)
    y = ps.pam(x, w, fmt)
    ey = fields(y)[1].astype(np.int64)
    ok = (ew > 0) & (ew < 255) & (ex < 255)
    # Flushed or clamped outputs are locally constant.
    ok &= (ey >= fmt.min_biased) | (ex == 0)
    ok &= to_bits(np.abs(y)) != fmt.max_magnitude_bits
    return np.where(ok, f, np.float32(0))


def _exact_div_factors(a, b, fmt: PAFormat):
    sa, ea, ma = fields(a)
    sb, eb, mb = fields(b)
    ea, eb = ea.astype(np.int64) - BIAS, eb.astype(np.int64) - BIAS
    borrow = (ma < mb).astype(np.int64)
    fa = ps.pow2_factor(sb, -eb - borrow, fmt)
    # d(a/b)/db = -sign(a) * 2**(E_a - 2 E_b - borrow)
    fb = ps.pow2_factor(sa ^ 1, ea - eb - eb - borrow, fmt)
    y = ps.pad(a, b, fmt)
    ey = fields(y)[1]
    live = (ey > 0) & (to_bits(np.abs(y)) != fmt.max_magnitude_bits)
    live &= (fields(b)[1] > 0) & (fields(b)[1] < 255)
    fa = np.where(live | (fields(a)[1] == 0), fa, np.float32(0))
    fb = np.where(live, fb, np.float32(0))
    return fa, fb


def pam(a, b, fmt: PAFormat = FP32) -> Var:
    a, b = _wrap(a), _wrap(b)

    def bw(node, g, mode):
        if mode is Mode.EXACT:
            ga = ps.pam(exact_mul_factor(a.value, b.value, fmt), g, fmt) if a.requires_grad else None
            gb = ps.pam(exact_mul_factor(b.value, a.value, fmt), g, fmt) if b.requires_grad else None
        else:
            ga = ps.pam(b.value, g, fmt) if a.requires_grad else None
            gb = ps.pam(a.value, g, fmt) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(np.asarray(ga, np.float32), a.shape),
                None if gb is None else _unbroadcast(np.asarray(gb, np.float32), b.shape))
    seg = ps.segment_ids_mul(a.value, b.value) if _tracking() else None
    return _record("pam", (a, b), ps.pam(a.value, b.value, fmt), bw, segment=seg)


def pad(a, b, fmt: PAFormat = FP32) -> Var:
    a, b = _wrap(a), _wrap(b)

    def bw(node, g, mode):
        if mode is Mode.EXACT:
            fa, fb = _exact_div_factors(a.value, b.value, fmt)
            ga = ps.pam(fa, g, fmt)
            gb = ps.pam(fb, g, fmt)
        else:
            ga = ps.pad(g, b.value, fmt)
            gb = np.negative(ps.pad(ps.pam(a.value, g, fmt), ps.pam(b.value, b.value, fmt), fmt))
        return (_unbroadcast(np.asarray(ga, np.float32), a.shape),
                _unbroadcast(np.asarray(gb, np.float32), b.shape))
    seg = ps.segment_ids_div(a.value, b.value) if _tracking() else None
    return _record("pad", (a, b), ps.pad(a.value, b.value, fmt), bw, segment=seg)


def paexp2(a, fmt: PAFormat = FP32) -> Var:
    a = _wrap(a)
    y = np.asarray(ps.paexp2(a.value, fmt), dtype=np.float32)

    def bw(node, g, mode):
        if mode is Mode.EXACT:
            fl = np.floor(a.value)
            e = np.clip(np.nan_to_num(fl), -512, 512).astype(np.int64)
            f = ps.pow2_factor(np.zeros_like(e), e, fmt)
            ey = fields(y)[1]
            f = np.where((ey > 0) & (to_bits(y) != fmt.max_magnitude_bits), f, np.float32(0))
            return (ps.pam(f, g, fmt),)
        return (ps.pam(ps.pam(y, ps.LN2, fmt), g, fmt),)
    seg = np.floor(a.value).astype(np.int32) if _tracking() else None
    return _record("paexp2", (a,), y, bw, segment=seg)


def palog2(a, fmt: PAFormat = FP32) -> Var:
    a = _wrap(a)

    def bw(node, g, mode):
        if mode is Mode.EXACT:
            e = fields(a.value)[1].astype(np.int64) - BIAS
            return (ps.pam(ps.pow2_factor(np.zeros_like(e), -e, fmt), g, fmt),)
        return (ps.pad(g, ps.pam(a.value, ps.LN2, fmt), fmt),)
    seg = fields(a.value)[1].astype(np.int16) if _tracking() else None
    try:
        y = ps.palog2(a.value, fmt)
    except ps.PADomainError as e:
        tape = _active()
        where = f" at node {len(tape.nodes)}" + (f" in group {tape.current_group!r}" if tape.current_group else "") \
            if tape is not None else ""
        raise ps.PADomainError(f"{e}{where}") from None
    return _record("palog2", (a,), y, bw, segment=seg)


def quantize(a, fmt: PAFormat) -> Var:
    """Mantissa rounding with a straight-through gradient."""
    a = _wrap(a)
    q = quantize_mantissa(a.value, fmt)
    seg = to_bits(q).copy() if _tracking() else None
    return _record("quantize", (a,), q, lambda node, g, mode: (g,), segment=seg)


# Composite PA functions differentiate through their defining graph.

def paexp(a, fmt: PAFormat = FP32) -> Var:
    return paexp2(pam(ps.LOG2E, a, fmt), fmt)


def palog(a, fmt: PAFormat = FP32) -> Var:
    return pad(palog2(a, fmt), ps.LOG2E, fmt)


def pasqrt(a, fmt: PAFormat = FP32) -> Var:
    return paexp2(pad(palog2(a, fmt), ps.TWO, fmt), fmt)


# --------------------------------------------------------------- matmul

def matmul(a, b, mode: pt.MatmulMode = pt.PAM) -> Var:
    """``a @ b`` with ``a`` of shape (..., m, k) and ``b`` either (k, n) or (..., k, n)."""
    a, b = _wrap(a), _wrap(b)
    shared = b.value.ndim == 2
    value = pt.matmul(a.value, b.value, mode)

    def as3(x, lead_rows):
        return x.reshape(-1, *x.shape[-2:]) if not lead_rows else x.reshape(1, -1, x.shape[-1])

    def bw(node, g, dmode):
        if shared:
            a3 = as3(a.value, True)
            g3 = as3(g, True)
            b3 = b.value[None]
        else:
            a3, b3, g3 = as3(a.value, False), as3(b.value, False), as3(g, False)
        if dmode is Mode.EXACT and mode.is_pa:
            ga, gb = pt.exact_matmul_grads(mode.prepare(a3), mode.prepare(b3), mode.prepare(g3), mode.fmt)
        else:
            bt = np.ascontiguousarray(b3.transpose(0, 2, 1))
            at = np.ascontiguousarray(a3.transpose(0, 2, 1))
            ga = pt.batched_matmul(g3, bt, mode)
            gb = pt.batched_matmul(at, g3, mode)
        ga = ga.reshape(a.shape)
        gb = gb.reshape(b.shape)
        return ga, gb
    seg = None
    if _tracking() and mode.is_pa:
        seg = _matmul_segments(a.value, b.value, mode)
    return _record("matmul", (a, b), value, bw, group_name="matmul", saved={"mode": mode}, segment=seg)


def _matmul_segments(a, b, mode):
    a = mode.prepare(a)
    b = mode.prepare(b)
    if b.ndim == 2:
        b = b[None]
        a = a.reshape(1, -1, a.shape[-1])
    else:
        a = a.reshape(-1, *a.shape[-2:])
        b = b.reshape(-1, *b.shape[-2:])
    _, ea, ma = fields(a)
    _, eb, mb = fields(b)
    # (batch, m, k, n) carries plus the exponent fields of both operands.
    carry = ((ma[..., :, None].astype(np.int32) + mb[:, None, :, :]) >> MANT_BITS).astype(np.int8)
    return np.concatenate([np.packbits(carry).view(np.uint8),
                           ea.astype(np.uint8).reshape(-1), eb.astype(np.uint8).reshape(-1)])


# ---------------------------------------------------------- standard ops

def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)

    def bw(node, g, mode):
        return (_unbroadcast(native.mul(g, b.value), a.shape) if a.requires_grad else None,
                _unbroadcast(native.mul(g, a.value), b.shape) if b.requires_grad else None)
    return _record("mul", (a, b), native.mul(a.value, b.value), bw)


def div(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    y = native.div(a.value, b.value)

    def bw(node, g, mode):
        ga = native.div(g, b.value)
        gb = np.negative(native.mul(ga, y))
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return _record("div", (a, b), y, bw)


def exp(a) -> Var:
    a = _wrap(a)
    y = native.exp(a.value)
    return _record("exp", (a,), y, lambda node, g, mode: (native.mul(g, y),))


def log(a) -> Var:
    a = _wrap(a)
    return _record("log", (a,), native.log(a.value),
                   lambda node, g, mode: (native.div(g, a.value),))


def sqrt(a) -> Var:
    a = _wrap(a)
    y = native.sqrt(a.value)
    return _record("sqrt", (a,), y,
                   lambda node, g, mode: (native.div(g, np.add(y, y, dtype=np.float32)),))


# ---------------------------------------------------------------- driver

class Gradients(dict):
    """Gradients keyed by leaf :class:`Var` (identity)."""

    def __getitem__(self, var):
        return super().__getitem__(id(var))

    def get(self, var, default=None):
        return super().get(id(var), default)

    def __contains__(self, var):
        return super().__contains__(id(var))


def forward(graph: Callable, *inputs, track_segments: bool = False):
    """Run ``graph`` on ``inputs`` (wrapped as leaf Vars) while recording.

    Returns ``(outputs, tape, leaves)``; ``outputs`` is whatever the graph
    returns (a Var or a tuple of Vars).
    """
    leaves = [x if isinstance(x, Var) else Var(x) for x in inputs]
    with Tape(track_segments=track_segments) as tape:
        out = graph(*leaves)
    return out, tape, leaves


def backward(tape: Tape, outputs, seeds=None, modes: DerivativeModes = DerivativeModes()) -> Gradients:
    """Propagate ``seeds`` (default ones) from ``outputs`` back through ``tape``."""
    if isinstance(outputs, Var):
        outputs = (outputs,)
        seeds = None if seeds is None else (seeds,)
    if seeds is None:
        seeds = [np.ones_like(o.value) for o in outputs]
    grads: dict[int, np.ndarray] = {}
    for o, s in zip(outputs, seeds):
        s = np.asarray(s, dtype=np.float32)
        if s.shape != o.value.shape:
            raise GraphError(f"seed shape {s.shape} does not match output {o.value.shape}")
        _accumulate(grads, o, s)
    leaves = Gradients()
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        mode = modes.for_group(node.group)
        for inp, gi in zip(node.inputs, node.backward(node, g, mode)):
            if gi is None or not inp.requires_grad:
                continue
            gi = np.asarray(gi, dtype=np.float32)
            if inp.node is None:
                _accumulate(leaves, inp, gi, key=id(inp))
            else:
                _accumulate(grads, inp, gi)
    # Seeds placed directly on leaves.
    for o in outputs:
        if o.node is None and id(o) in grads:
            _accumulate(leaves, o, grads.pop(id(o)), key=id(o))
    return leaves


def _accumulate(store, var, g, key=None):
    key = id(var) if key is None else key
    prev = dict.get(store, key)
    dict.__setitem__(store, key, g if prev is None else np.add(prev, g, dtype=np.float32))


# ----------------------------------------------------------- gradient check

@dataclass
class GradCheckReport:
    analytic: np.ndarray
    finite_diff: np.ndarray
    breakpoint_flag: np.ndarray

    def rel_error(self) -> np.ndarray:
        from . import instrument
        with instrument.phase(instrument.REFERENCE):
            diff = np.abs(self.analytic.astype(np.float64) - self.finite_diff)
            return native.div64(diff, np.maximum(np.abs(self.finite_diff), 1e-300))


def _pointwise_segments(tape: Tape, n: int) -> np.ndarray:
    # Segment indices as (rows, n) for a graph acting elementwise on n points.
    rows = []
    for node in tape.nodes:
        if node.segment is None:
            continue
        seg = np.asarray(node.segment, dtype=np.int64).reshape(-1)
        if seg.size % n == 0:
            rows.append(seg.reshape(-1, n))
        else:
            rows.append(np.repeat(seg[:, None], n, axis=1))
    if not rows:
        return np.zeros((0, n), dtype=np.int64)
    return np.concatenate(rows, axis=0)


def grad_check(f: Callable, x, h, modes: DerivativeModes = DerivativeModes.all(Mode.EXACT)) -> GradCheckReport:
    """Compare exact gradients of an elementwise PA graph with central differences.

    ``f`` maps a Var to a Var of the same shape, elementwise. ``h`` is a
    scalar or per-element step. Points where any node's segment index
    differs between ``x - h``, ``x`` and ``x + h`` are flagged and their
    finite difference is NaN.
    """
    from . import instrument
    x = np.atleast_1d(np.asarray(x, dtype=np.float32))
    h = np.broadcast_to(np.asarray(h, dtype=np.float32), x.shape)
    if np.any(h <= 0):
        raise ValueError("step must be positive")
    n = x.size
    outs, segs = [], []
    for pt_ in (np.subtract(x, h, dtype=np.float32), x, np.add(x, h, dtype=np.float32)):
        y, tape, leaves = forward(f, pt_, track_segments=True)
        outs.append((y, tape, leaves))
        segs.append(_pointwise_segments(tape, n))
    y, tape, leaves = outs[1]
    analytic = backward(tape, y, modes=modes)[leaves[0]].reshape(-1)
    flag = np.zeros(n, dtype=bool)
    if segs[0].shape == segs[2].shape:
        flag |= np.any(segs[0] != segs[2], axis=0) | np.any(segs[0] != segs[1], axis=0)
    else:
        flag[:] = True
    with instrument.phase(instrument.REFERENCE):
        lo = outs[0][0].value.reshape(-1).astype(np.float64)
        hi = outs[2][0].value.reshape(-1).astype(np.float64)
        span = np.subtract(x, h, dtype=np.float32).astype(np.float64)
        span = np.add(x, h, dtype=np.float32).astype(np.float64) - span
        fd = native.div64(hi - lo, span.reshape(-1))
    fd = np.where(flag, np.nan, fd)
    return GradCheckReport(analytic, fd, flag)


def run_graph(graph: Callable, inputs: Sequence, params: Sequence[Var] = ()):
    """Convenience: forward + backward with unit seed; returns (output, grads)."""
    out, tape, leaves = forward(graph, *inputs)
    return out, backward(tape, out)
