"""Network layers and the two reference models.

Each layer has a piecewise affine form (every product, quotient, root,
exp and log is the PA version) and a standard form using native float32
arithmetic. Which one runs is set by :class:`Numerics`. Layers take and
return :class:`~pamlab.pa_autodiff.Var` values so they can be trained.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import instrument, native
from . import pa_autodiff as ad
from . import pa_scalar as ps
from . import pa_tensor as pt

TINY = np.float32(np.finfo(np.float32).tiny)


@dataclass(frozen=True)
class Numerics:
    """Which parts of a model use piecewise affine arithmetic.

    ``softmax`` also covers the other elementwise scalings inside a block
    (attention scale, dropout scale).
    """

    matmul: pt.MatmulMode = pt.PAM
    softmax: bool = True
    layernorm: bool = True
    loss: bool = True

    @classmethod
    def standard(cls) -> "Numerics":
        return cls(pt.STANDARD, False, False, False)

    @classmethod
    def fully_pa(cls, matmul: pt.MatmulMode = pt.PAM) -> "Numerics":
        return cls(matmul, True, True, True)

    @classmethod
    def matmul_only(cls, matmul: pt.MatmulMode = pt.PAM) -> "Numerics":
        return cls(matmul, False, False, False)

    @property
    def any_standard(self) -> bool:
        return not (self.matmul.is_pa and self.softmax and self.layernorm and self.loss)


@dataclass(frozen=True)
class LayerConfig:
    derivatives: ad.DerivativeModes = ad.DerivativeModes()
    layernorm_eps: float = 1e-5
    label_smoothing: float = 0.0
    dropout_prob: float = 0.0

    def __post_init__(self):
        if not self.layernorm_eps > 0:
            raise ValueError("layernorm epsilon must be positive")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must be in [0, 1)")
        if not 0 <= self.dropout_prob < 1:
            raise ValueError("dropout_prob must be in [0, 1)")


def _f32(x) -> np.float32:
    return np.float32(x)


def _scale(x, c, pa: bool):
    return ad.pam(x, c) if pa else ad.mul(x, c)


def _divide(x, c, pa: bool):
    return ad.pad(x, c) if pa else ad.div(x, c)


# ------------------------------------------------------------------ layers

def linear(x, W, bias=None, mode: pt.MatmulMode = pt.PAM):
    """``x @ W.T + bias`` with ``W`` of shape (out, in)."""
    y = ad.matmul(x, ad.transpose(W, (1, 0)), mode)
    return y if bias is None else ad.add(y, bias)


def layer_norm(x, gain, bias, eps=1e-5, pa: bool = True):
    """Normalise over the last axis.

    PA form: ``mean = pad(sum x, d)``, ``var = pad(sum pam(xc, xc), d)``,
    ``out = pam(gain, pad(xc, pasqrt(var + eps))) + bias``.
    """
    x = ad._wrap(x)
    d = _f32(x.shape[-1])
    with ad.group("layernorm"):
        mean = _divide(ad.sum(x, axis=-1, keepdims=True), d, pa)
        xc = ad.sub(x, mean)
        sq = ad.pam(xc, xc) if pa else ad.mul(xc, xc)
        var = _divide(ad.sum(sq, axis=-1, keepdims=True), d, pa)
        std = ad.add(var, _f32(eps))
        std = ad.pasqrt(std) if pa else ad.sqrt(std)
        normed = _divide(xc, std, pa)
        out = ad.pam(gain, normed) if pa else ad.mul(gain, normed)
        return ad.add(out, bias)


def softmax(x, pa: bool = True):
    """Softmax over the last axis after subtracting the row maximum."""
    x = ad._wrap(x)
    with ad.group("softmax"):
        z = ad.sub(x, ad.max(x, axis=-1, keepdims=True))
        e = ad.paexp(z) if pa else ad.exp(z)
        return _divide(e, ad.sum(e, axis=-1, keepdims=True), pa)


def _setup_const(fn):
    with instrument.phase(instrument.SETUP):
        return _f32(fn())


def attention(q, k, v, mode: pt.MatmulMode = pt.PAM, pa: bool = True, scale=None):
    """Scaled dot-product attention over (..., T, dh) operands."""
    q, k, v = ad._wrap(q), ad._wrap(k), ad._wrap(v)
    dh = q.shape[-1]
    if scale is None:
        scale = _setup_const(lambda: native.div(1.0, native.sqrt(np.float32(dh))))
    nd = len(k.shape)
    kt = ad.transpose(k, tuple(range(nd - 2)) + (nd - 1, nd - 2))
    scores = _scale(ad.matmul(q, kt, mode), scale, pa)
    return ad.matmul(softmax(scores, pa), v, mode)


def smoothed_targets(targets, n_classes: int, smoothing: float, pa: bool) -> np.ndarray:
    """Smoothed one-hot rows ``(1 - s) * onehot + s / C`` as float32 constants."""
    targets = np.asarray(targets)
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if targets.size and (targets.min() < 0 or targets.max() >= n_classes):
        raise ValueError("target index out of range")
    s = _f32(smoothing)
    off = ps.pad(s, _f32(n_classes)) if pa else native.div(s, _f32(n_classes))
    on = np.float32(np.float32(1) - s) + off
    q = np.full((targets.size, n_classes), off, dtype=np.float32)
    q[np.arange(targets.size), targets.reshape(-1)] = on
    return q


def cross_entropy(logits, targets, smoothing: float = 0.0, pa: bool = True):
    """Mean label-smoothed softmax cross entropy over rows of ``logits`` (N, C) or (C,).

    ``loss = -sum_c q_c * log(softmax(logits)_c)`` per row, then the
    batch mean. Probabilities are floored at the smallest normal float so
    the logarithm stays defined.
    """
    logits = ad._wrap(logits)
    if len(logits.shape) == 1:
        logits = ad.reshape(logits, (1, logits.shape[0]))
    n, c = logits.shape
    q = smoothed_targets(targets, c, smoothing, pa)
    with ad.group("loss"):
        p = ad.maximum_const(softmax(logits, pa), TINY)
        lp = ad.palog(p) if pa else ad.log(p)
        weighted = ad.pam(q, lp) if pa else ad.mul(q, lp)
        per_row = ad.neg(ad.sum(weighted, axis=-1))
        return _divide(ad.sum(per_row), _f32(n), pa)


def dropout(x, p: float, rng: np.random.Generator | None, pa: bool = True, training: bool = True):
    """Zero each element with probability ``p``; survivors scaled by ``1 / (1 - p)``."""
    if p == 0 or not training:
        return x
    scale = _setup_const(lambda: native.div(1.0, np.float32(1.0 - p)))
    keep = rng.random(np.shape(ad._wrap(x).value)) >= p
    return ad.select(keep, _scale(x, scale, pa))


# ------------------------------------------------------------------ models

@dataclass(frozen=True)
class TransformerSpec:
    layers: int = 2
    heads: int = 2
    embed_dim: int = 32
    ff_dim: int = 64
    vocab_size: int = 8
    max_len: int = 8

    def __post_init__(self):
        for name in ("heads", "embed_dim", "ff_dim", "vocab_size", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.layers < 0:
            raise ValueError("layers must be non-negative")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")


@dataclass(frozen=True)
class MLPSpec:
    in_dim: int = 2
    hidden: tuple = (64, 64)
    n_classes: int = 2

    def __post_init__(self):
        if self.in_dim <= 0 or self.n_classes < 2 or any(h <= 0 for h in self.hidden):
            raise ValueError(f"invalid MLP spec {self}")


def _uniform(rng, shape, fan_in):
    # Host-side initialisation, counted as setup.
    with instrument.phase(instrument.SETUP):
        bound = native.div(1.0, native.sqrt(np.float32(fan_in)))
        u = rng.random(shape, dtype=np.float32)
        return np.asarray(native.mul(u + u - np.float32(1.0), bound), dtype=np.float32)


@dataclass
class Model:
    """Parameters plus a forward function; see :func:`build_model`."""

    spec: object
    params: dict = field(default_factory=dict)

    def param_vars(self) -> dict:
        return {k: ad.Var(v, name=k) for k, v in self.params.items()}

    def logits(self, pv: dict, inputs, numerics: Numerics = Numerics(), cfg: LayerConfig = LayerConfig(),
               rng=None, training: bool = False):
        if isinstance(self.spec, MLPSpec):
            return _mlp_forward(self.spec, pv, inputs, numerics)
        return _transformer_forward(self.spec, pv, inputs, numerics, cfg, rng, training)


def build_model(spec, seed: int | np.random.Generator = 0) -> Model:
    """Initialise a transformer token classifier or an MLP from its spec."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = {}
    if isinstance(spec, MLPSpec):
        dims = (spec.in_dim, *spec.hidden, spec.n_classes)
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            p[f"fc{i}.weight"] = _uniform(rng, (b, a), a)
            p[f"fc{i}.bias"] = _uniform(rng, (b,), a)
        return Model(spec, p)
    if not isinstance(spec, TransformerSpec):
        raise TypeError(f"unknown model spec {spec!r}")
    d, f = spec.embed_dim, spec.ff_dim
    p["tok_emb"] = _uniform(rng, (spec.vocab_size, d), 1)
    p["pos_emb"] = _uniform(rng, (spec.max_len, d), 1)
    for i in range(spec.layers):
        pre = f"block{i}."
        for ln in ("ln1", "ln2"):
            p[pre + ln + ".gain"] = np.ones(d, dtype=np.float32)
            p[pre + ln + ".bias"] = np.zeros(d, dtype=np.float32)
        for w in ("q", "k", "v", "o"):
            p[pre + f"attn.{w}.weight"] = _uniform(rng, (d, d), d)
            p[pre + f"attn.{w}.bias"] = np.zeros(d, dtype=np.float32)
        p[pre + "ff1.weight"] = _uniform(rng, (f, d), d)
        p[pre + "ff1.bias"] = np.zeros(f, dtype=np.float32)
        p[pre + "ff2.weight"] = _uniform(rng, (d, f), f)
        p[pre + "ff2.bias"] = np.zeros(d, dtype=np.float32)
    if spec.layers:
        p["ln_f.gain"] = np.ones(d, dtype=np.float32)
        p["ln_f.bias"] = np.zeros(d, dtype=np.float32)
    p["head.weight"] = _uniform(rng, (spec.vocab_size, d), d)
    p["head.bias"] = np.zeros(spec.vocab_size, dtype=np.float32)
    return Model(spec, p)


def _mlp_forward(spec: MLPSpec, pv, x, numerics: Numerics):
    h = ad._wrap(x)
    n = len(spec.hidden) + 1
    for i in range(n):
        h = linear(h, pv[f"fc{i}.weight"], pv[f"fc{i}.bias"], numerics.matmul)
        if i < n - 1:
            h = ad.relu(h)
    return h


def _heads(x, b, t, h, dh):
    return ad.transpose(ad.reshape(x, (b, t, h, dh)), (0, 2, 1, 3))


def _transformer_forward(spec: TransformerSpec, pv, tokens, numerics: Numerics, cfg: LayerConfig,
                         rng, training: bool, embedded=None):
    tokens = np.asarray(tokens)
    b, t = tokens.shape
    d, h = spec.embed_dim, spec.heads
    dh = d // h
    mode = numerics.matmul
    x = embedded if embedded is not None else embed(spec, pv, tokens)
    drop = cfg.dropout_prob
    for i in range(spec.layers):
        pre = f"block{i}."
        a = layer_norm(x, pv[pre + "ln1.gain"], pv[pre + "ln1.bias"], cfg.layernorm_eps, numerics.layernorm)
        q = _heads(linear(a, pv[pre + "attn.q.weight"], pv[pre + "attn.q.bias"], mode), b, t, h, dh)
        k = _heads(linear(a, pv[pre + "attn.k.weight"], pv[pre + "attn.k.bias"], mode), b, t, h, dh)
        v = _heads(linear(a, pv[pre + "attn.v.weight"], pv[pre + "attn.v.bias"], mode), b, t, h, dh)
        att = attention(q, k, v, mode, numerics.softmax)
        att = ad.reshape(ad.transpose(att, (0, 2, 1, 3)), (b, t, d))
        att = linear(att, pv[pre + "attn.o.weight"], pv[pre + "attn.o.bias"], mode)
        x = ad.add(x, dropout(att, drop, rng, numerics.softmax, training))
        f = layer_norm(x, pv[pre + "ln2.gain"], pv[pre + "ln2.bias"], cfg.layernorm_eps, numerics.layernorm)
        f = ad.relu(linear(f, pv[pre + "ff1.weight"], pv[pre + "ff1.bias"], mode))
        f = linear(f, pv[pre + "ff2.weight"], pv[pre + "ff2.bias"], mode)
        x = ad.add(x, dropout(f, drop, rng, numerics.softmax, training))
    if spec.layers:
        x = layer_norm(x, pv["ln_f.gain"], pv["ln_f.bias"], cfg.layernorm_eps, numerics.layernorm)
    return linear(x, pv["head.weight"], pv["head.bias"], mode)


def embed(spec: TransformerSpec, pv, tokens):
    """Token plus learned position embedding, shape (B, T, D)."""
    tokens = np.asarray(tokens)
    t = tokens.shape[1]
    if t > spec.max_len:
        raise ValueError(f"sequence length {t} exceeds max_len {spec.max_len}")
    pos = ad.take_rows(pv["pos_emb"], np.arange(t))
    return ad.add(ad.take_rows(pv["tok_emb"], tokens), pos)


def transformer_from_embedding(model: Model, pv, embedded, numerics: Numerics = Numerics(),
                               cfg: LayerConfig = LayerConfig()):
    """Run the transformer on already-embedded inputs (B, T, D)."""
    e = ad._wrap(embedded)
    b, t, _ = e.shape
    return _transformer_forward(model.spec, pv, np.zeros((b, t), dtype=np.int64), numerics, cfg,
                                None, False, embedded=e)


def model_loss(model: Model, pv, inputs, targets, numerics: Numerics = Numerics(),
               cfg: LayerConfig = LayerConfig(), rng=None, training: bool = False):
    """Mean cross entropy of the model's logits (per token for the transformer)."""
    logits = model.logits(pv, inputs, numerics, cfg, rng, training)
    c = logits.shape[-1]
    flat = ad.reshape(logits, (math.prod(logits.shape[:-1]), c))
    return cross_entropy(flat, np.asarray(targets).reshape(-1), cfg.label_smoothing, numerics.loss), logits


# PA-named entry points.
def layer_norm_pa(x, gain, bias, eps=1e-5):
    return layer_norm(x, gain, bias, eps, pa=True)


def softmax_pa(x):
    return softmax(x, pa=True)


def attention_pa(q, k, v, mode: pt.MatmulMode = pt.PAM):
    return attention(q, k, v, mode, pa=True)


def cross_entropy_ls_pa(logits, target, smoothing: float = 0.0):
    return cross_entropy(logits, target, smoothing, pa=True)


def dropout_pa(x, p: float, rng, training: bool = True):
    return dropout(x, p, rng, pa=True, training=training)
