"""Piecewise affinity scan of a toy transformer loss.

A fully piecewise affine model is an affine function of its inputs and
weights on every region where no discrete index changes: exponents,
carries, floors, ReLU masks and argmax positions, which the tape records
when ``track_segments`` is on. This scan walks random line segments in
embedding space and in weight space. From each sample point it shrinks a
window ``[t, t + w]`` until both ends and the midpoint share one segment
signature, then measures the relative second difference
``|L(t) - 2 L(t + w/2) + L(t + w)| / max|L|``.

The same procedure applied to a standard transformer finds long windows
(only ReLU masks and argmax are discrete there) on which the loss curves.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import instrument, native
from .. import pa_autodiff as ad
from .. import pa_nn as nn

TOY_SPEC = nn.TransformerSpec(layers=2, heads=2, embed_dim=8, ff_dim=16, vocab_size=4, max_len=4)


@dataclass
class AffinityReport:
    numerics: str
    space: str
    tolerance: float
    windows: int = 0
    shrunk: int = 0
    violations: int = 0
    worst: float = 0.0
    widths: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.windows > 0 and self.violations == 0

    def line(self) -> str:
        w = np.asarray(self.widths) if self.widths else np.zeros(1)
        return (f"{self.numerics:<8} {self.space:<6} windows={self.windows} shrunk={self.shrunk} "
                f"violations={self.violations} worst_rel={self.worst:.3e} tol={self.tolerance:.3e} "
                f"median_width={np.median(w):.3e}")


class ToyLoss:
    """Loss of the toy transformer on one fixed sequence, as a function of a line parameter."""

    def __init__(self, numerics: nn.Numerics, seed: int = 0, spec: nn.TransformerSpec = TOY_SPEC):
        self.spec = spec
        self.numerics = numerics
        with instrument.phase(instrument.SETUP):
            self.model = nn.build_model(spec, seed)
            rng = np.random.default_rng(seed + 1)
            self.tokens = rng.integers(0, spec.vocab_size, (1, spec.max_len))
        self.targets = self.tokens[:, ::-1].copy()
        self.embedded = nn.embed(spec, self.model.param_vars(), self.tokens).value

    def __call__(self, embedded=None, params=None):
        """Return ``(loss, segment signature)`` at the given embedding and weights."""
        params = self.model.params if params is None else params
        pv = {k: ad.Var(v) for k, v in params.items()}
        emb = self.embedded if embedded is None else embedded
        with ad.Tape(track_segments=True) as tape:
            logits = nn.transformer_from_embedding(self.model, pv, emb, self.numerics)
            c = logits.shape[-1]
            loss = nn.cross_entropy(ad.reshape(logits, (-1, c)), self.targets.reshape(-1), 0.0,
                                    self.numerics.loss)
        return float(loss.value), tape.segment_signature()


def _direction(rng, shape, norm):
    d = rng.standard_normal(shape)
    return native.mul64(d, norm / np.linalg.norm(d))


def _line(f: ToyLoss, space: str, rng, span: float):
    """Map ``t`` in [0, 1] to a point on a random segment centred on the base point."""
    if space == "input":
        base = f.embedded.astype(np.float64)
        d = _direction(rng, base.shape, span * np.linalg.norm(base))

        def at(t):
            return f(embedded=(base + native.mul64(d, t - 0.5)).astype(np.float32))
        return at
    names = list(f.model.params)
    base = {k: f.model.params[k].astype(np.float64) for k in names}
    total = np.sqrt(sum(np.sum(native.mul64(v, v)) for v in base.values()))
    dirs = {k: rng.standard_normal(base[k].shape) for k in names}
    dn = np.sqrt(sum(np.sum(native.mul64(v, v)) for v in dirs.values()))
    scale = span * total / dn

    def at(t):
        s = native.mul64(scale, t - 0.5)
        return f(params={k: (base[k] + native.mul64(dirs[k], s)).astype(np.float32) for k in names})
    return at


def scan(numerics: nn.Numerics, space: str = "input", segments: int = 32, points: int = 16,
         span: float = 4.0, tolerance: float = 2.0 ** -16, seed: int = 0, max_halvings: int = 40,
         label: str | None = None) -> AffinityReport:
    """Scan ``segments`` random segments with ``points`` collinear samples each."""
    if space not in ("input", "weight"):
        raise ValueError("space must be 'input' or 'weight'")
    rep = AffinityReport(label or ("pa" if not numerics.any_standard else "standard"), space, tolerance)
    with instrument.phase(instrument.REFERENCE):
        f = ToyLoss(numerics, seed)
        rng = np.random.default_rng(seed + 2)
        ts = np.linspace(0.0, 1.0, points)
        for _ in range(segments):
            at = _line(f, space, rng, span)
            cache = {}

            def ev(t):
                if t not in cache:
                    cache[t] = at(t)
                return cache[t]

            for i in range(points - 2):
                a, w = ts[i], ts[i + 2] - ts[i]
                for k in range(max_halvings + 1):
                    (l0, s0), (l1, s1), (l2, s2) = ev(a), ev(a + w / 2), ev(a + w)
                    if s0 == s1 == s2:
                        break
                    w /= 2
                else:
                    continue
                rep.windows += 1
                rep.shrunk += k > 0
                rep.widths.append(w)
                rel = abs(l0 - 2 * l1 + l2) / max(abs(l0), abs(l1), abs(l2), 1e-30)
                rep.worst = max(rep.worst, rel)
                rep.violations += rel > tolerance
    return rep


def run_all(segments: int = 32, points: int = 16, span: float = 4.0, seed: int = 0,
            tolerance: float = 2.0 ** -16) -> dict:
    """PA and standard scans over input and weight space; keys ``(numerics, space)``."""
    out = {}
    for name, num in (("pa", nn.Numerics.fully_pa()), ("standard", nn.Numerics.standard())):
        for space in ("input", "weight"):
            out[name, space] = scan(num, space, segments, points, span, tolerance, seed, label=name)
    return out
