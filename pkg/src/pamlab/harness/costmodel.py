"""Energy and area of a PAM unit relative to float multipliers.

A PAM is costed as two int32 additions (exponent and mantissa adders
combined into one 32-bit add, plus the bias subtraction). A MAC adds one
float32 addition to either side.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class CostTable:
    """Per-op energy (pJ) and area (um^2)."""

    int32_add: tuple = (0.1, 137.0)
    int8_add: tuple = (0.03, 36.0)
    int32_mul: tuple = (3.1, 3495.0)
    int8_mul: tuple = (0.2, 282.0)
    fp32_add: tuple = (0.9, 4184.0)
    fp32_mul: tuple = (3.7, 7700.0)
    fp16_add: tuple = (0.4, 1360.0)
    fp16_mul: tuple = (1.1, 1640.0)

    @classmethod
    def from_config(cls, cfg) -> "CostTable":
        return cls(**{name: (getattr(cfg, f"{name}_pj"), getattr(cfg, f"{name}_um2"))
                      for name in cls.__dataclass_fields__})


@dataclass(frozen=True)
class Ratio:
    name: str
    metric: str
    pam_cost: float
    baseline_cost: float

    @property
    def ratio(self) -> float:
        return self.pam_cost / self.baseline_cost

    @property
    def percent_2sf(self) -> str:
        return f"{float(f'{self.ratio * 100:.2g}'):g}%"


def ratios(t: CostTable = CostTable()) -> list[Ratio]:
    pam = tuple(2 * x for x in t.int32_add)
    out = []
    for idx, metric in ((0, "energy"), (1, "area")):
        out.append(Ratio("pam_vs_fp32_mul", metric, pam[idx], t.fp32_mul[idx]))
    for idx, metric in ((0, "energy"), (1, "area")):
        out.append(Ratio("pam_vs_fp16_mul", metric, pam[idx], t.fp16_mul[idx]))
    # MACs accumulate in float32 in both cases.
    for mul, label in ((t.fp32_mul, "fp32"), (t.fp16_mul, "fp16")):
        for idx, metric in ((0, "energy"), (1, "area")):
            out.append(Ratio(f"pam_mac_vs_{label}_mac", metric, pam[idx] + t.fp32_add[idx],
                             mul[idx] + t.fp32_add[idx]))
    return out


def write_csv(rows: list[Ratio], path) -> None:
    with open(path, "w", newline="") as fp:
        w = csv.writer(fp)
        w.writerow(["comparison", "metric", "pam_cost", "baseline_cost", "ratio", "percent_2sf"])
        for r in rows:
            w.writerow([r.name, r.metric, repr(r.pam_cost), repr(r.baseline_cost), f"{r.ratio:.6f}", r.percent_2sf])


def run(cfg, out_dir: Path) -> int:
    rows = ratios(CostTable.from_config(cfg))
    write_csv(rows, out_dir / "costmodel.csv")
    for r in rows:
        print(f"{r.name:<22} {r.metric:<7} {r.percent_2sf}")
    return 0
