"""AdamW and SGD, in standard float32 and fully piecewise affine forms.

In :func:`adamw_pa_step` every product, quotient and square root is a PA
op; the hyperparameters are converted to float32 once. The standard step
follows the same order of operations with native arithmetic so that the
two agree bit for bit when every value involved is a power of two.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import instrument, native
from . import pa_scalar as ps
from .float_codec import FP32, PAFormat

_F32 = np.float32


@dataclass
class OptState:
    """Per-parameter moments plus the running powers of the betas."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1_pow: np.float32 = _F32(1.0)
    beta2_pow: np.float32 = _F32(1.0)

    @classmethod
    def zeros_like(cls, params: dict) -> "OptState":
        return cls({k: np.zeros_like(p, dtype=np.float32) for k, p in params.items()},
                   {k: np.zeros_like(p, dtype=np.float32) for k, p in params.items()})

    def tensors(self) -> dict:
        """Flat name -> tensor table for checkpointing."""
        out = {f"opt.m.{k}": a for k, a in self.m.items()}
        out.update({f"opt.v.{k}": a for k, a in self.v.items()})
        out["opt.t"] = np.array([self.t], dtype=np.float32)
        out["opt.beta_pow"] = np.array([self.beta1_pow, self.beta2_pow], dtype=np.float32)
        return out

    @classmethod
    def from_tensors(cls, table: dict) -> "OptState":
        st = cls({k[6:]: a for k, a in table.items() if k.startswith("opt.m.")},
                 {k[6:]: a for k, a in table.items() if k.startswith("opt.v.")})
        st.t = int(table["opt.t"][0])
        st.beta1_pow, st.beta2_pow = (_F32(x) for x in table["opt.beta_pow"])
        return st


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")


def _check(params, grads, state):
    for k, p in params.items():
        if k not in grads:
            continue
        if np.shape(grads[k]) != np.shape(p):
            raise ValueError(f"gradient shape {np.shape(grads[k])} != parameter shape {np.shape(p)} for {k}")
        if k not in state.m:
            state.m[k] = np.zeros_like(p, dtype=np.float32)
            state.v[k] = np.zeros_like(p, dtype=np.float32)


def adamw_pa_step(params: dict, grads: dict, state: OptState, lr, beta1=0.9, beta2=0.98, eps=1e-8,
                  weight_decay=0.0, fmt: PAFormat = FP32):
    """One AdamW step using only PA multiply/divide/sqrt.

    ``m = pam(b1, m) + pam(1 - b1, g)``, ``v = pam(b2, v) + pam(1 - b2, pam(g, g))``,
    ``w -= pam(lr, pad(m_hat, pasqrt(v_hat) + eps)) + pam(lr, pam(wd, w))``.
    Returns ``(new_params, state)``; ``state`` is updated in place.
    """
    AdamWConfig(float(lr), beta1, beta2, eps, weight_decay)
    _check(params, grads, state)
    lr, b1, b2, eps, wd = (_F32(x) for x in (lr, beta1, beta2, eps, weight_decay))
    one = _F32(1.0)
    c1, c2 = one - b1, one - b2
    state.t += 1
    state.beta1_pow = _F32(ps.pam(state.beta1_pow, b1, fmt))
    state.beta2_pow = _F32(ps.pam(state.beta2_pow, b2, fmt))
    bc1, bc2 = one - state.beta1_pow, one - state.beta2_pow
    out = {}
    for k, w in params.items():
        if k not in grads:
            out[k] = w
            continue
        g = np.asarray(grads[k], dtype=np.float32)
        m = ps.pam(b1, state.m[k], fmt) + ps.pam(c1, g, fmt)
        v = ps.pam(b2, state.v[k], fmt) + ps.pam(c2, ps.pam(g, g, fmt), fmt)
        state.m[k] = np.asarray(m, dtype=np.float32)
        state.v[k] = np.asarray(v, dtype=np.float32)
        m_hat = ps.pad(m, bc1, fmt)
        v_hat = ps.pad(v, bc2, fmt)
        denom = ps.pasqrt(np.maximum(v_hat, _F32(0)), fmt, errors="nan") + eps
        # A zero numerator contributes nothing, whatever the denominator.
        step = np.where(m_hat == 0, _F32(0), ps.pad(m_hat, denom, fmt))
        update = ps.pam(lr, step, fmt)
        decay = ps.pam(lr, ps.pam(wd, w, fmt), fmt)
        out[k] = np.asarray(w - update - decay, dtype=np.float32)
    return out, state


def adamw_standard_step(params: dict, grads: dict, state: OptState, lr, beta1=0.9, beta2=0.98, eps=1e-8,
                        weight_decay=0.0):
    """Textbook AdamW in float32, same operation order as :func:`adamw_pa_step`."""
    AdamWConfig(float(lr), beta1, beta2, eps, weight_decay)
    _check(params, grads, state)
    lr, b1, b2, eps, wd = (_F32(x) for x in (lr, beta1, beta2, eps, weight_decay))
    one = _F32(1.0)
    c1, c2 = one - b1, one - b2
    state.t += 1
    state.beta1_pow = _F32(native.mul(state.beta1_pow, b1))
    state.beta2_pow = _F32(native.mul(state.beta2_pow, b2))
    bc1, bc2 = one - state.beta1_pow, one - state.beta2_pow
    out = {}
    for k, w in params.items():
        if k not in grads:
            out[k] = w
            continue
        g = np.asarray(grads[k], dtype=np.float32)
        m = native.mul(b1, state.m[k]) + native.mul(c1, g)
        v = native.mul(b2, state.v[k]) + native.mul(c2, native.mul(g, g))
        state.m[k] = np.asarray(m, dtype=np.float32)
        state.v[k] = np.asarray(v, dtype=np.float32)
        m_hat = native.div(m, bc1)
        v_hat = native.div(v, bc2)
        denom = native.sqrt(v_hat) + eps
        step = np.where(m_hat == 0, _F32(0), native.div(m_hat, denom))
        update = native.mul(lr, step)
        decay = native.mul(lr, native.mul(wd, w))
        out[k] = np.asarray(w - update - decay, dtype=np.float32)
    return out, state


def sgd_step(params: dict, grads: dict, lr, pa: bool = False, fmt: PAFormat = FP32) -> dict:
    """Plain gradient descent ``w - lr * g``."""
    lr = _F32(lr)
    out = {}
    for k, w in params.items():
        if k not in grads:
            out[k] = w
            continue
        g = np.asarray(grads[k], dtype=np.float32)
        if g.shape != np.shape(w):
            raise ValueError(f"gradient shape {g.shape} != parameter shape {np.shape(w)} for {k}")
        step = ps.pam(lr, g, fmt) if pa else native.mul(lr, g)
        out[k] = np.asarray(w - step, dtype=np.float32)
    return out


def lr_schedule(step: int, base_lr: float, warmup: int = 0, total: int = 0, kind: str = "cosine") -> np.float32:
    """Linear warmup then cosine (or constant) decay, computed host-side.

    The arithmetic is counted under the schedule phase, separately from
    training, since it only produces one scalar constant per step.
    """
    if kind not in ("cosine", "constant"):
        raise ValueError(f"unknown schedule {kind!r}")
    with instrument.phase(instrument.SCHEDULE):
        lr = _F32(base_lr)
        if warmup and step < warmup:
            return _F32(native.div(native.mul(lr, _F32(step + 1)), _F32(warmup)))
        if kind == "constant" or total <= warmup:
            return lr
        frac = native.div(_F32(step - warmup), _F32(total - warmup))
        angle = native.mul(_F32(math.pi), np.minimum(frac, _F32(1)))
        instrument.record("cos", 1)
        cos = _F32(np.cos(angle))
        return _F32(native.mul(lr, native.mul(_F32(0.5), _F32(1) + cos)))


class AdamW:
    """Stateful wrapper choosing the PA or standard step."""

    def __init__(self, params: dict, config: AdamWConfig = AdamWConfig(), pa: bool = True,
                 fmt: PAFormat = FP32):
        self.config = config
        self.pa = pa
        self.fmt = fmt
        self.state = OptState.zeros_like(params)

    def step(self, params: dict, grads: dict, lr=None) -> dict:
        c = self.config
        lr = c.lr if lr is None else lr
        if self.pa:
            out, self.state = adamw_pa_step(params, grads, self.state, lr, c.beta1, c.beta2, c.eps,
                                            c.weight_decay, self.fmt)
        else:
            out, self.state = adamw_standard_step(params, grads, self.state, lr, c.beta1, c.beta2, c.eps,
                                                  c.weight_decay)
        return out
