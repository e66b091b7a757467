import csv

import numpy as np
import pytest

from pamlab import pa_scalar
from pamlab.harness import cli, costmodel, derivgrid, errmap, train, verify
from pamlab.harness import config as cfgmod
from pamlab.harness.config import ConfigError, RunConfig

QUICK_VERIFY = dict(exhaustive=False, random_pairs=200_000, roundtrip_cases=20_000, gradcheck_points=300,
                    errscan_bits=8, affinity_segments=1, affinity_points=4)
QUICK_TRAIN = dict(model="mlp", hidden=(8, 8), n_train=80, n_test=40, epochs=2)


def read_csv(path):
    with open(path, newline="") as fp:
        return list(csv.DictReader(fp))


def argv_for(task, out, **kw):
    args = [task, "--out", str(out)]
    for k, v in kw.items():
        args += [f"--{k}", cfgmod.format_value(v)]
    return args


# ------------------------------------------------------------------- config

def test_config_round_trip(tmp_path):
    cfg = RunConfig(model="mlp", hidden=(3, 5), lr=0.25, softmax_pa=False, sweep_bits=(7, 3))
    cfgmod.save(cfg, tmp_path / "c.cfg")
    assert cfgmod.load(tmp_path / "c.cfg") == cfg


def test_config_comments_and_errors():
    cfg = cfgmod.parse_text("# comment\n\nseed = 4  # trailing\nexhaustive = no\n")
    assert cfg.seed == 4 and cfg.exhaustive is False
    for bad in ("nokey\n", "colour = red\n", "seed = many\n", "mantissa_bits = 30\n", "heads = 3\n",
                "x_min = 9\n", "lr = nan\n"):
        with pytest.raises(ConfigError):
            cfgmod.parse_text(bad)


def test_resolved_defaults():
    assert RunConfig(model="mlp").resolved_epochs == 60
    assert RunConfig().resolved_epochs == 8 and RunConfig().resolved_lr == 0.003
    assert RunConfig(epochs=3, lr=0.5).resolved_epochs == 3


def test_cli_overrides(tmp_path):
    (tmp_path / "c.cfg").write_text("seed = 3\nlr = 0.5\n")
    cfg = cli.resolve(["train", "--config", str(tmp_path / "c.cfg"), "--seed", "9", "--hidden", "4,4"])
    assert cfg.task == "train" and cfg.seed == 9 and cfg.lr == 0.5 and cfg.hidden == (4, 4)


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["verify", "--seed", "x"],
    ["verify", "--config", "/nonexistent/file.cfg"],
    ["verify", "--mantissa_bits", "0"],
    ["verify", "--no_such_key", "1"],
])
def test_cli_config_errors_exit_2(argv, capsys):
    assert cli.main(argv) == 2


# ---------------------------------------------------------------- costmodel

def test_costmodel(tmp_path):
    assert cli.main(argv_for("costmodel", tmp_path)) == 0
    rows = read_csv(tmp_path / "costmodel.csv")
    assert [r["percent_2sf"] for r in rows] == ["5.4%", "3.6%", "18%", "17%", "24%", "38%", "55%", "77%"]


def test_costmodel_uses_config_constants():
    # PAM is priced as two int32 additions
    t = costmodel.CostTable.from_config(RunConfig(fp32_mul_pj=0.4))
    assert costmodel.ratios(t)[0].ratio == pytest.approx(0.5)


# ------------------------------------------------------------------- errmap

def test_errmap(tmp_path):
    assert cli.main(argv_for("errmap", tmp_path, resolution=64)) == 0
    rows = read_csv(tmp_path / "errmap.csv")
    assert len(rows) == 64 * 64
    assert all(float(r["rel_err_percent"]) == 0 for r in rows if float(r["x1"]) == 1.0)
    worst = min(rows, key=lambda r: float(r["rel_err_percent"]))
    assert (float(worst["x1"]), float(worst["x2"])) == (1.5, 1.5)
    assert float(worst["rel_err_percent"]) == pytest.approx(-100 / 9, abs=1e-9)
    x1, x2, rel = errmap.grid(16)
    assert rel.max() <= 0 and rel.min() >= -1 / 9 - 1e-12


# ---------------------------------------------------------------- derivgrid

def test_derivgrid_examples():
    (sq,) = derivgrid.evaluate("square", [2.0])
    assert sq["f_hat"] == 4.0 and sq["deriv_exact"] == 4.0 * 1.25
    (lg,) = derivgrid.evaluate("log2", [8.0])
    assert lg["f_hat"] == 3.0 and lg["deriv_exact"] == 2.0 ** -3 * 1.25
    (mc,) = derivgrid.evaluate("mul_const", [1.5], constant=1.5)
    assert mc["f_hat"] == 2.0 and mc["fwd_rel_err"] == pytest.approx(-1 / 9)
    (bad,) = derivgrid.evaluate("log", [-1.0])
    assert bad["flag"] == "domain"


def test_derivgrid_cli(tmp_path):
    assert cli.main(argv_for("derivgrid", tmp_path, samples=9)) == 0
    rows = read_csv(tmp_path / "derivgrid.csv")
    assert list(rows[0]) == derivgrid.HEADER
    assert {r["function"] for r in rows} == set(cfgmod.DERIVGRID_FUNCTIONS)
    assert len(rows) == 9 * len(cfgmod.DERIVGRID_FUNCTIONS)


# ------------------------------------------------------------------- verify

def test_verify_quick_passes(tmp_path):
    assert cli.main(argv_for("verify", tmp_path, **QUICK_VERIFY)) == 0
    text = (tmp_path / "verify_report.txt").read_text()
    assert "result: PASS" in text and "[FAIL]" not in text


def test_verify_detects_broken_sign(tmp_path, monkeypatch):
    real = pa_scalar.pam

    def broken(a, b, fmt=pa_scalar.FP32):
        return np.abs(real(a, b, fmt))

    monkeypatch.setattr(pa_scalar, "pam", broken)
    assert not verify.suite_sign(10_000, 0).passed
    assert cli.main(argv_for("verify", tmp_path, **dict(QUICK_VERIFY, affinity_segments=0))) == 1
    assert "result: FAIL" in (tmp_path / "verify_report.txt").read_text()


def test_verify_detects_wrong_bound(monkeypatch):
    real = pa_scalar.pam
    monkeypatch.setattr(pa_scalar, "pam", lambda a, b, fmt=pa_scalar.FP32: np.float32(1.01) * real(a, b, fmt))
    assert not verify.suite_error_bound(6).passed


# -------------------------------------------------------------------- train

def test_train_writes_outputs_and_is_reproducible(tmp_path):
    for run in ("a", "b"):
        assert cli.main(argv_for("train", tmp_path / run, **QUICK_TRAIN)) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    rows = read_csv(tmp_path / "a" / "metrics.csv")
    assert list(rows[0]) == train.METRIC_HEADER and len(rows) == 2
    assert all(r["native_ops_train"] == "0" for r in rows)
    assert (tmp_path / "a" / "checkpoint.bin").exists()
    assert cfgmod.load(tmp_path / "a" / "config.txt").model == "mlp"


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exits_1(tmp_path, capsys):
    assert cli.main(argv_for("train", tmp_path, **dict(QUICK_TRAIN, lr=3e38, matmul="standard",
                                                       optimizer_pa=False))) == 1
    assert "training aborted" in capsys.readouterr().err


def test_sweep(tmp_path):
    kw = dict(QUICK_TRAIN, epochs=1, sweep_bits=(3, 23, 7, 4), sweep_seeds=(0,))
    assert cli.main(argv_for("sweep", tmp_path, **kw)) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert [int(r["mantissa_bits"]) for r in rows] == [23, 7, 4, 3]
    assert list(rows[0]) == train.SWEEP_HEADER
    assert len(read_csv(tmp_path / "sweep_runs.csv")) == 4
