"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one ``[criterion N] PASS|FAIL ...`` line. These run the
full-size workloads (exhaustive sweeps, three-seed training runs), so the
module takes tens of minutes.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from pamlab import instrument
from pamlab import pa_optim as po
from pamlab import pa_scalar as ps
from pamlab.harness import config as cfgmod
from pamlab.harness import costmodel, train, verify

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SEEDS = (0, 1, 2)

pytestmark = pytest.mark.slow


def report(capsys, n: int, ok: bool, text: str):
    with capsys.disabled():
        print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} {text}")


def _suite_text(res) -> str:
    return f"{res.name} ({res.seconds:.0f} s): " + "; ".join(f"{k}={v}" for k, v in res.details.items())


# ---------------------------------------------------------------- arithmetic

def test_criterion_1_int_add_equivalence(capsys):
    res = verify.suite_equivalence(True, 100_000_000, 0)
    ok = res.passed and res.seconds <= 15 * 60
    report(capsys, 1, ok, _suite_text(res))
    assert res.details["bf16_exhaustive_pairs"] == (254 * 128) ** 2
    assert ok


def test_criterion_2_error_bound(capsys):
    res = verify.suite_error_bound(12)
    report(capsys, 2, res.passed, _suite_text(res))
    assert res.passed


def test_criterion_3_inverse_and_round_trip(capsys):
    res = verify.suite_inverse(10_000_000, 1)
    report(capsys, 3, res.passed, _suite_text(res))
    assert res.passed


def test_criterion_4_gradient_checks(capsys):
    res = verify.suite_gradients(10_000, 3)
    report(capsys, 4, res.passed, _suite_text(res))
    assert res.passed


def test_criterion_5_piecewise_affinity(capsys):
    res = verify.suite_affinity(32, 16, 1.0, 0)
    report(capsys, 5, res.passed, _suite_text(res))
    assert res.details["pa_affine"], "PA loss not affine on a detected piece"
    assert res.details["standard_detected_nonaffine"], "standard transformer passed the affinity test"


# ------------------------------------------------------------------ training

def _run(cfg_name: str, tmp: Path, **over):
    cfg = cfgmod.load(CONFIGS / cfg_name).replace(task="train", **over)
    tag = "_".join(f"{k}{v}" for k, v in over.items())
    t0 = time.perf_counter()
    est, status = train.train_once(cfg, tmp / f"{Path(cfg_name).stem}_{tag}")
    assert status == 0, f"{cfg_name} {over} failed"
    return est, time.perf_counter() - t0


@pytest.fixture(scope="module")
def parity_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("parity")
    out = {}
    for model in ("transformer", "mlp"):
        for kind in ("pa", "standard"):
            for seed in SEEDS:
                out[model, kind, seed] = _run(f"train_{model}_{kind}.cfg", tmp, seed=seed)
    return out


def test_criterion_6_multiplication_free_training(parity_runs, capsys):
    lines, ok = [], True
    for model in ("transformer", "mlp"):
        est, _ = parity_runs[model, "pa", 0]
        rep = est.op_report_
        per_epoch = [row["native_ops_train"] for row in est.history_]
        non_exempt = rep.total()
        train_phase = rep.by_phase().get(instrument.TRAIN, 0)
        ok &= non_exempt == 0 and train_phase == 0 and not any(per_epoch)
        lines.append(f"{model}: outside-setup={non_exempt} train={train_phase} by_phase={rep.by_phase()} "
                     f"kinds={rep.by_kind()}")
    report(capsys, 6, ok, " | ".join(lines))
    assert ok


def test_criterion_7_training_parity(parity_runs, capsys):
    lines, ok = [], True
    for model in ("transformer", "mlp"):
        pa = np.array([parity_runs[model, "pa", s][0].history_[-1]["eval_metric"] for s in SEEDS])
        std = np.array([parity_runs[model, "standard", s][0].history_[-1]["eval_metric"] for s in SEEDS])
        slowest = max(parity_runs[model, k, s][1] for k in ("pa", "standard") for s in SEEDS)
        gap = 100 * (std.mean() - pa.mean())
        good = gap <= 2.0 and slowest <= 20 * 60
        ok &= good
        lines.append(f"{model}: pa={np.round(pa, 4).tolist()} standard={np.round(std, 4).tolist()} "
                     f"gap={gap:+.2f} pts slowest_run={slowest:.0f} s")
    report(capsys, 7, ok, " | ".join(lines))
    assert ok


def test_criterion_8_narrow_mantissa(tmp_path, capsys):
    cfg = cfgmod.load(CONFIGS / "sweep_transformer.cfg").replace(task="sweep")
    status, runs = train.sweep(cfg, tmp_path)
    assert status == 0
    metric = {(r["mantissa_bits"], r["seed"]): r["eval_metric"] for r in runs}
    mean = {b: np.mean([metric[b, s] for s in SEEDS]) for b in cfg.sweep_bits}
    close = {b: abs(100 * (mean[b] - mean[23])) for b in (7, 4)}
    worse = sum(metric[3, s] < metric[23, s] for s in SEEDS)
    ok = close[7] <= 1.0 and close[4] <= 1.0 and worse >= 2
    per_bits = " ".join(f"{b}bit={[round(metric[b, s], 4) for s in SEEDS]}" for b in (23, 7, 4, 3))
    report(capsys, 8, ok, f"{per_bits} | |7-23|={close[7]:.2f} pts |4-23|={close[4]:.2f} pts "
                          f"3bit_worse_in={worse}/3 seeds (epochs={cfg.epochs})")
    assert ok


# -------------------------------------------------------------- cost, optim

def test_criterion_9_cost_model(capsys):
    cfg = cfgmod.load(CONFIGS / "costmodel.cfg")
    got = [r.percent_2sf for r in costmodel.ratios(costmodel.CostTable.from_config(cfg))]
    want = ["5.4%", "3.6%", "18%", "17%", "24%", "38%", "55%", "77%"]
    report(capsys, 9, got == want, f"got={got}")
    assert got == want


def test_criterion_10_optimizer(capsys):
    # 1-D quadratic (w - 3)^2 from w = 0, gradient 2 (w - 3) via PA ops
    opt = po.AdamW({"w": np.array(0.0, np.float32)}, po.AdamWConfig(lr=0.1), pa=True)
    p = {"w": np.array(0.0, np.float32)}
    first = None
    for _ in range(200):
        d = np.float32(p["w"] - np.float32(3.0))
        loss = float(ps.pam(d, d))
        first = loss if first is None else first
        p = opt.step(p, {"w": np.asarray(ps.pam(np.float32(2), d), np.float32)})
    d = np.float32(p["w"] - np.float32(3.0))
    final = float(ps.pam(d, d))
    quad_ok = final < 1e-2 * first

    # all powers of two, eps = 0
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 16))
        w = (rng.choice([-1, 1], n) * np.exp2(rng.integers(-8, 5, n))).astype(np.float32)
        g = (rng.choice([-1, 1], n) * np.exp2(rng.integers(-8, 5, n))).astype(np.float32)
        kw = dict(lr=np.float32(2.0 ** -int(rng.integers(1, 12))), beta1=0.5, beta2=0.5, eps=0.0,
                  weight_decay=float(rng.choice([0.0, 2.0 ** -6])))
        a, _ = po.adamw_pa_step({"w": w}, {"w": g}, po.OptState.zeros_like({"w": w}), **kw)
        b, _ = po.adamw_standard_step({"w": w}, {"w": g}, po.OptState.zeros_like({"w": w}), **kw)
        mismatches += not np.array_equal(a["w"].view(np.uint32), b["w"].view(np.uint32))
    ok = quad_ok and mismatches == 0
    report(capsys, 10, ok, f"quadratic {first:.4g} -> {final:.3g} (ratio {final / first:.2e}) in 200 steps; "
                           f"pow2 PA vs standard mismatches={mismatches}/1000")
    assert ok
