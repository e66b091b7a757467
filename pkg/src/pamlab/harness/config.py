"""Run configuration: a flat dataclass stored as ``key = value`` lines.

Every key has a default. Files may contain ``#`` comments and blank lines.
Numeric keys set to 0 where noted pick a per-model default.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, fields
from pathlib import Path

TASKS = ("verify", "errmap", "derivgrid", "costmodel", "train", "sweep")
DERIVGRID_FUNCTIONS = ("mul_const", "div", "square", "sqrt", "exp2", "log2", "exp", "log")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: str = "verify"
    seed: int = 0
    out: str = "out"

    # model
    model: str = "transformer"          # transformer | mlp
    layers: int = 2
    heads: int = 2
    embed_dim: int = 32
    ff_dim: int = 64
    vocab_size: int = 16
    seq_len: int = 16
    hidden: tuple = (64, 64)

    # data (fixed by data_seed so runs with different seeds see the same task)
    data_seed: int = 0
    n_train: int = 1000                 # sequences (transformer) or points (mlp)
    n_test: int = 500
    spiral_noise: float = 0.2

    # training; 0 selects the model default
    epochs: int = 0
    batch_size: int = 32
    lr: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.0
    warmup_steps: int = 20
    schedule: str = "cosine"            # cosine | constant
    label_smoothing: float = 0.1
    dropout: float = 0.0
    layernorm_eps: float = 1e-5

    # arithmetic per component
    matmul: str = "pam"                 # pam | standard
    mantissa_bits: int = 23
    softmax_pa: bool = True
    layernorm_pa: bool = True
    loss_pa: bool = True
    optimizer_pa: bool = True
    deriv_matmul: str = "approx"        # exact | approx
    deriv_softmax: str = "approx"
    deriv_layernorm: str = "approx"
    deriv_loss: str = "exact"
    deriv_default: str = "approx"

    # sweep
    sweep_bits: tuple = (23, 7, 4, 3)
    sweep_seeds: tuple = (0, 1, 2)

    # errmap / derivgrid
    resolution: int = 64
    function: str = "all"
    x_min: float = 0.25
    x_max: float = 8.0
    samples: int = 257
    delta_y: float = 1.25
    constant: float = 1.5

    # verify
    exhaustive: bool = True
    random_pairs: int = 100_000_000
    roundtrip_cases: int = 10_000_000
    gradcheck_points: int = 10_000
    errscan_bits: int = 12
    affinity_segments: int = 32         # per space; 0 skips the affinity suite
    affinity_points: int = 16
    affinity_span: float = 1.0          # segment length relative to the base point norm

    # hardware cost table: energy in pJ, area in um^2
    int32_add_pj: float = 0.1
    int32_add_um2: float = 137.0
    int8_add_pj: float = 0.03
    int8_add_um2: float = 36.0
    int32_mul_pj: float = 3.1
    int32_mul_um2: float = 3495.0
    int8_mul_pj: float = 0.2
    int8_mul_um2: float = 282.0
    fp32_add_pj: float = 0.9
    fp32_add_um2: float = 4184.0
    fp32_mul_pj: float = 3.7
    fp32_mul_um2: float = 7700.0
    fp16_add_pj: float = 0.4
    fp16_add_um2: float = 1360.0
    fp16_mul_pj: float = 1.1
    fp16_mul_um2: float = 1640.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> "RunConfig":
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)
        need(self.task in TASKS, f"task must be one of {TASKS}")
        need(self.model in ("transformer", "mlp"), "model must be 'transformer' or 'mlp'")
        need(self.matmul in ("pam", "standard"), "matmul must be 'pam' or 'standard'")
        need(self.schedule in ("cosine", "constant"), "schedule must be 'cosine' or 'constant'")
        for k in ("deriv_matmul", "deriv_softmax", "deriv_layernorm", "deriv_loss", "deriv_default"):
            need(getattr(self, k) in ("exact", "approx"), f"{k} must be 'exact' or 'approx'")
        need(1 <= self.mantissa_bits <= 23, "mantissa_bits must be in [1, 23]")
        need(all(1 <= b <= 23 for b in self.sweep_bits) and self.sweep_bits, "sweep_bits must be in [1, 23]")
        need(len(self.sweep_seeds) > 0, "sweep_seeds must not be empty")
        need(self.affinity_points >= 3, "affinity_points must be at least 3")
        need(self.affinity_span > 0, "affinity_span must be positive")
        for k in ("layers", "affinity_segments", "epochs", "warmup_steps", "seed", "data_seed"):
            need(getattr(self, k) >= 0, f"{k} must be non-negative")
        for k in ("heads", "embed_dim", "ff_dim", "vocab_size", "seq_len", "n_train", "n_test", "batch_size",
                  "samples", "random_pairs", "roundtrip_cases", "gradcheck_points"):
            need(getattr(self, k) > 0, f"{k} must be positive")
        need(self.embed_dim % self.heads == 0, "embed_dim must be divisible by heads")
        need(self.vocab_size >= 2, "vocab_size must be at least 2")
        need(all(h > 0 for h in self.hidden), "hidden sizes must be positive")
        need(self.resolution >= 2, "resolution must be at least 2")
        need(self.samples >= 2, "samples must be at least 2")
        need(1 <= self.errscan_bits <= 23, "errscan_bits must be in [1, 23]")
        need(self.function in DERIVGRID_FUNCTIONS + ("all",), f"function must be 'all' or one of {DERIVGRID_FUNCTIONS}")
        need(self.x_min < self.x_max, "x_min must be below x_max")
        need(0 <= self.label_smoothing < 1, "label_smoothing must be in [0, 1)")
        need(0 <= self.dropout < 1, "dropout must be in [0, 1)")
        need(self.layernorm_eps > 0, "layernorm_eps must be positive")
        need(0 <= self.beta1 < 1 and 0 <= self.beta2 < 1, "betas must be in [0, 1)")
        need(self.lr >= 0 and self.eps >= 0 and self.weight_decay >= 0, "lr, eps and weight_decay must be >= 0")
        need(self.spiral_noise >= 0, "spiral_noise must be non-negative")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float):
                need(math.isfinite(v), f"{f.name} must be finite")
        return self

    # defaults that depend on the model
    @property
    def resolved_epochs(self) -> int:
        return self.epochs or (60 if self.model == "mlp" else 8)

    @property
    def resolved_lr(self) -> float:
        return self.lr or (0.01 if self.model == "mlp" else 0.003)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_HINTS = typing.get_type_hints(RunConfig)


def field_type(name: str):
    return _HINTS[name]


def parse_value(name: str, text: str):
    """Convert ``text`` to the type of config key ``name``."""
    if name not in _HINTS:
        raise ConfigError(f"unknown config key {name!r}")
    tp = _HINTS[name]
    text = text.strip()
    try:
        if tp is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text.replace("_", ""))
        if tp is float:
            return float(text)
        if tp is tuple:
            return tuple(int(p) for p in text.replace(" ", "").split(",") if p)
        return text
    except ValueError:
        raise ConfigError(f"invalid value {text!r} for {name} ({tp.__name__})") from None


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_text(text: str, base: RunConfig | None = None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key] = parse_value(key, value)
    cfg = base or RunConfig()
    try:
        return dataclasses.replace(cfg, **values)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_text(text)


def dumps(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {format_value(getattr(cfg, f.name))}\n" for f in fields(cfg))


def save(cfg: RunConfig, path) -> None:
    Path(path).write_text(dumps(cfg), encoding="utf-8")


def keys() -> list[str]:
    return [f.name for f in fields(RunConfig)]
