"""Static and runtime checks that PA code paths never multiply natively.

The static check parses the compute modules and rejects ``*``, ``/``,
``**`` and ``@`` as well as calls to numpy/math functions that multiply,
divide or take roots, exponentials or logarithms. Only
:mod:`pamlab.native` (the counted wrapper) may do those things.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PACKAGE_DIR = Path(__file__).resolve().parent.parent

AUDITED_MODULES = ("float_codec", "instrument", "pa_scalar", "pa_tensor", "_kernels", "pa_autodiff",
                   "pa_nn", "pa_optim", "estimators")

FORBIDDEN_BINOPS = (ast.Mult, ast.Div, ast.Pow, ast.MatMult)
FORBIDDEN_CALLS = frozenset({
    "multiply", "divide", "true_divide", "sqrt", "cbrt", "exp", "exp2", "expm1", "log", "log2", "log10",
    "log1p", "power", "float_power", "matmul", "dot", "vdot", "inner", "einsum", "tensordot", "reciprocal",
    "square", "prod", "cumprod", "hypot",
})
# Receivers whose attributes are checked: numpy and math namespaces.
_NAMESPACES = frozenset({"np", "numpy", "math"})
# math.prod on shape tuples is host integer arithmetic.
_ALLOWED = frozenset({("math", "prod")})


@dataclass(frozen=True)
class Violation:
    module: str
    line: int
    what: str

    def __str__(self):
        return f"{self.module}:{self.line}: {self.what}"


def audit_source(source: str, module: str) -> list[Violation]:
    out = []
    for node in ast.walk(ast.parse(source)):
        op = None
        if isinstance(node, (ast.BinOp, ast.AugAssign)):
            op = node.op
        if op is not None and isinstance(op, FORBIDDEN_BINOPS):
            out.append(Violation(module, node.lineno, f"operator {type(op).__name__}"))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Attribute):
            recv = node.func.value
            name = node.func.attr
            if (isinstance(recv, ast.Name) and recv.id in _NAMESPACES and name in FORBIDDEN_CALLS
                    and (recv.id, name) not in _ALLOWED):
                out.append(Violation(module, node.lineno, f"call {recv.id}.{name}"))
    return out


def audit_package(modules=AUDITED_MODULES) -> list[Violation]:
    out = []
    for m in modules:
        path = PACKAGE_DIR / f"{m}.py"
        out.extend(audit_source(path.read_text(encoding="utf-8"), m))
    return out


def runtime_audit(seed: int = 0) -> dict:
    """Native-op counts of one fully PA training step of a tiny transformer."""
    from .. import instrument
    from .. import pa_autodiff as ad
    from .. import pa_nn as nn
    from .. import pa_optim as po

    rng = np.random.default_rng(seed)
    with instrument.phase(instrument.SETUP):
        model = nn.build_model(nn.TransformerSpec(layers=2, heads=2, embed_dim=16, ff_dim=32,
                                                  vocab_size=8, max_len=8), rng)
    tokens = rng.integers(0, 8, size=(4, 8))
    state = po.OptState.zeros_like(model.params)
    cfg = nn.LayerConfig(label_smoothing=0.1, dropout_prob=0.25)
    with instrument.counting() as rep:
        pv = model.param_vars()
        with ad.Tape() as tape:
            loss, _ = nn.model_loss(model, pv, tokens, tokens[:, ::-1], nn.Numerics(), cfg, rng, True)
        g = ad.backward(tape, loss, modes=cfg.derivatives)
        exact = ad.backward(tape, loss, modes=ad.DerivativeModes.all(ad.Mode.EXACT))
        grads = {k: g[v] for k, v in pv.items()}
        po.adamw_pa_step(model.params, grads, state, 1e-3, 0.9, 0.98, 1e-8, 0.01)
    return {"counted": rep.total(), "by_phase": rep.by_phase(), "loss": float(loss.value),
            "exact_grads": len(exact)}
