"""Verification suites run by ``pamlab verify``.

Each suite returns a :class:`SuiteResult`; the command writes all of them
to ``verify_report.txt`` and exits nonzero if any failed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import instrument, native
from .. import pa_autodiff as ad
from .. import pa_scalar as ps
from ..float_codec import from_bits, to_bits
from . import affinity, audit

CHUNK = 1 << 21


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def lines(self) -> list[str]:
        out = [f"[{'PASS' if self.passed else 'FAIL'}] {self.name} ({self.seconds:.1f} s)"]
        out.extend(f"    {k}: {v}" for k, v in self.details.items())
        return out


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def bf16_positive_normals() -> np.ndarray:
    """Every positive normal value on the bfloat16 grid, as float32."""
    e = np.arange(1, 255, dtype=np.uint32)
    m = np.arange(128, dtype=np.uint32)
    return from_bits(((e[:, None] << 23) | (m[None, :] << 16)).ravel())


def random_normals(rng, n, exp_lo=1, exp_hi=254, signed=True) -> np.ndarray:
    e = rng.integers(exp_lo, exp_hi + 1, size=n, dtype=np.uint32)
    m = rng.integers(0, 1 << 23, size=n, dtype=np.uint32)
    s = rng.integers(0, 2, size=n, dtype=np.uint32) if signed else np.zeros(n, dtype=np.uint32)
    return from_bits((s << 31) | (e << 23) | m)


# ------------------------------------------------------------- equivalence

@_timed
def suite_equivalence(exhaustive: bool, random_pairs: int, seed: int) -> SuiteResult:
    """pam == pam_int_add, bit for bit."""
    mismatches = 0
    checked = 0
    first = None
    if exhaustive:
        vals = bf16_positive_normals()
        rows = max(1, CHUNK // vals.size)
        b = vals[None, :]
        for i in range(0, vals.size, rows):
            a = vals[i:i + rows, None]
            r1, r2 = to_bits(ps.pam(a, b)), to_bits(ps.pam_int_add(a, b))
            bad = r1 != r2
            n_bad = int(bad.sum())
            if n_bad and first is None:
                j = np.argwhere(bad)[0]
                first = (float(a[j[0], 0]), float(b[0, j[1]]))
            mismatches += n_bad
            checked += r1.size
    exhaustive_pairs = checked
    rng = np.random.default_rng(seed)
    left = random_pairs
    while left > 0:
        n = min(left, CHUNK)
        a, b = random_normals(rng, n), random_normals(rng, n)
        bad = to_bits(ps.pam(a, b)) != to_bits(ps.pam_int_add(a, b))
        n_bad = int(bad.sum())
        if n_bad and first is None:
            k = int(np.argmax(bad))
            first = (float(a[k]), float(b[k]))
        mismatches += n_bad
        checked += n
        left -= n
    details = {"bf16_exhaustive_pairs": exhaustive_pairs, "random_pairs": random_pairs,
               "mismatches": mismatches}
    if first is not None:
        details["first_mismatch"] = first
    return SuiteResult("pam_int_add_equivalence", mismatches == 0, details)


# -------------------------------------------------------------- error bound

@_timed
def suite_error_bound(bits: int = 12) -> SuiteResult:
    """Relative error of pam on a 2^bits x 2^bits mantissa grid lies in [-1/9, 0]."""
    n = 1 << bits
    # 1 + i / n, built from the bit pattern so no division is needed
    x = from_bits(np.uint32(0x3F800000) | (np.arange(n, dtype=np.uint32) << (23 - bits)))
    lo, lo_at, hi = math.inf, None, -math.inf
    zero_ok = True
    rows = max(1, CHUNK // n)
    for i in range(0, n, rows):
        a = x[i:i + rows, None]
        y = ps.pam(a, x[None, :]).astype(np.float64)
        with instrument.phase(instrument.REFERENCE):
            exact = native.mul64(a.astype(np.float64), x[None, :].astype(np.float64))
            rel = native.div64(y - exact, exact)
        k = np.unravel_index(int(np.argmin(rel)), rel.shape)
        if rel[k] < lo:
            lo, lo_at = float(rel[k]), (float(a[k[0], 0]), float(x[k[1]]))
        hi = max(hi, float(rel.max()))
        zero_ok &= bool((rel[:, 0] == 0).all())
        if i == 0:
            zero_ok &= bool((rel[0, :] == 0).all())
    with instrument.phase(instrument.REFERENCE):
        ninth = float(native.div64(-1.0, 9.0))
    ulp = float(np.spacing(abs(ninth)))
    in_range = lo >= ninth - ulp and hi <= 0.0
    at_mid = lo_at == (1.5, 1.5)
    tight = abs(lo - ninth) <= ulp
    return SuiteResult("error_bound", in_range and at_mid and tight and zero_ok, {
        "grid": f"{n}x{n}", "max_relative_error": f"{lo:.10f}",
        "at_operands": lo_at, "at_mantissas": tuple(v - 1 for v in lo_at) if lo_at else None,
        "reference_minus_one_ninth": f"{ninth:.10f}", "max_positive_error": hi,
        "exact_at_zero_mantissa": zero_ok,
    })


# ----------------------------------------------------------- inverse checks

@_timed
def suite_inverse(cases: int, seed: int) -> SuiteResult:
    """pad(pam(a, b), b) == a without clamp/flush; paexp2(palog2(x)) == x on [0.5, 4)."""
    rng = np.random.default_rng(seed)
    inv_fail = rt_fail = 0
    left = cases
    while left > 0:
        n = min(left, CHUNK)
        # exponents kept well inside the normal range so neither step clamps or flushes
        a = random_normals(rng, n, 64, 190)
        b = random_normals(rng, n, 64, 190)
        y = ps.pam(a, b)
        back = ps.pad(y, b)
        inv_fail += int((to_bits(back) != to_bits(a)).sum())
        x = random_normals(rng, n, 126, 128, signed=False)
        rt = ps.paexp2(ps.palog2(x))
        rt_fail += int((to_bits(rt) != to_bits(x)).sum())
        left -= n
    return SuiteResult("inverse_and_round_trip", inv_fail == 0 and rt_fail == 0, {
        "cases_each": cases, "pad_pam_failures": inv_fail, "exp2_log2_failures": rt_fail})


# ---------------------------------------------------------------- sign rule

@_timed
def suite_sign(cases: int, seed: int) -> SuiteResult:
    """Result sign is the XOR of the operand signs."""
    rng = np.random.default_rng(seed)
    a, b = random_normals(rng, cases), random_normals(rng, cases)
    want = (to_bits(a) ^ to_bits(b)) >> 31
    bad = 0
    for fn in (ps.pam, ps.pad):
        y = fn(a, b)
        nz = y != 0
        bad += int(((to_bits(y) >> 31) != want)[nz].sum())
    return SuiteResult("sign_xor", bad == 0, {"cases": cases, "violations": bad})


# ----------------------------------------------------------- gradient checks

def _points(rng, n, kind):
    if kind == "exp2":
        return rng.uniform(-8, 8, n).astype(np.float32)
    mag = np.exp2(rng.uniform(-6, 6, n)).astype(np.float32)
    if kind == "positive":
        return mag
    return np.where(rng.random(n) < 0.5, mag, -mag).astype(np.float32)


def gradient_cases():
    """(name, graph builder, point kind) for every primitive derivative rule."""
    return [
        ("pam_dA", lambda c: (lambda v: ad.pam(v, c)), "signed"),
        ("pad_dA", lambda c: (lambda v: ad.pad(v, c)), "signed"),
        ("pad_dB", lambda c: (lambda v: ad.pad(c, v)), "signed"),
        ("paexp2", lambda c: (lambda v: ad.paexp2(v)), "exp2"),
        ("palog2", lambda c: (lambda v: ad.palog2(v)), "positive"),
    ]


def check_primitive(name, build, kind, points: int, rng, tol=2.0 ** -10):
    """Exact gradients against central differences at ``points`` unflagged inputs."""
    good = 0
    worst = 0.0
    flagged = 0
    while good < points:
        n = int((points - good) * 1.1) + 16
        x = _points(rng, n, kind)
        c = _points(rng, n, "signed")
        if kind == "exp2":
            h = np.float32(2.0 ** -12)
        else:
            # a power of two a fixed number of octaves below |x|; palog2 only
            # breaks at octave boundaries so it can afford a wider step
            drop = 6 if kind == "positive" else 11
            h = from_bits(((to_bits(np.abs(x)) >> 23) - drop) << 23)
        rep = ad.grad_check(build(c), x, h)
        keep = ~rep.breakpoint_flag
        flagged += int((~keep).sum())
        err = rep.rel_error()[keep]
        take = min(points - good, int(keep.sum()))
        err = err[:take]
        worst = max(worst, float(err.max()) if err.size else 0.0)
        good += take
    return worst <= tol, {"points": points, "max_rel_error": f"{worst:.3e}", "flagged_skipped": flagged}


def _zero_mantissa_agreement(rng, n=4096) -> dict:
    """Exact and approximate gradients of pam/pad/matmul coincide on powers of two."""
    def pow2(size):
        e = rng.integers(-20, 20, size)
        s = rng.integers(0, 2, size)
        return ps.pow2_factor(s, e)
    out = {}
    a, b, g = pow2(n), pow2(n), pow2(n)
    for name, op in (("pam", ad.pam), ("pad", ad.pad)):
        y, tape, (va, vb) = ad.forward(op, a, b)
        ge = ad.backward(tape, y, g, ad.DerivativeModes.all(ad.Mode.EXACT))
        gp = ad.backward(tape, y, g, ad.DerivativeModes.all(ad.Mode.APPROX))
        out[name] = bool((to_bits(ge[va]) == to_bits(gp[va])).all() and (to_bits(ge[vb]) == to_bits(gp[vb])).all())
    A = ps.pow2_factor(rng.integers(0, 2, (3, 4, 5)), rng.integers(-8, 8, (3, 4, 5)))
    B = ps.pow2_factor(rng.integers(0, 2, (3, 5, 6)), rng.integers(-8, 8, (3, 5, 6)))
    G = ps.pow2_factor(rng.integers(0, 2, (3, 4, 6)), rng.integers(-8, 8, (3, 4, 6)))
    y, tape, (va, vb) = ad.forward(lambda p, q: ad.matmul(p, q), A, B)
    ge = ad.backward(tape, y, G, ad.DerivativeModes.all(ad.Mode.EXACT))
    gp = ad.backward(tape, y, G, ad.DerivativeModes.all(ad.Mode.APPROX))
    out["matmul"] = bool((to_bits(ge[va]) == to_bits(gp[va])).all() and (to_bits(ge[vb]) == to_bits(gp[vb])).all())
    return out


@_timed
def suite_gradients(points: int, seed: int) -> SuiteResult:
    rng = np.random.default_rng(seed)
    details = {}
    ok = True
    for name, build, kind in gradient_cases():
        passed, d = check_primitive(name, build, kind, points, rng)
        ok &= passed
        details[name] = d
    agree = _zero_mantissa_agreement(rng)
    details["exact_equals_approx_on_powers_of_two"] = agree
    ok &= all(agree.values())
    return SuiteResult("gradient_checks", ok, details)


# ------------------------------------------------------------ instrumentation

@_timed
def suite_instrumentation(seed: int) -> SuiteResult:
    violations = audit.audit_package()
    rt = audit.runtime_audit(seed)
    ok = not violations and rt["counted"] == 0
    details = {"source_violations": len(violations), "runtime_native_ops": rt["counted"],
               "by_phase": rt["by_phase"]}
    if violations:
        details["first_violations"] = [str(v) for v in violations[:5]]
    return SuiteResult("instrumentation_audit", ok, details)


# ------------------------------------------------------------ affinity

@_timed
def suite_affinity(segments: int, points: int, span: float, seed: int) -> SuiteResult:
    """PA toy transformer must be affine on its pieces; the standard one must not be."""
    reps = affinity.run_all(segments, points, span, seed)
    pa_ok = all(reps["pa", s].passed for s in ("input", "weight"))
    std_fails = all(not reps["standard", s].passed for s in ("input", "weight"))
    details = {f"{n}_{s}": r.line().split(None, 2)[2] for (n, s), r in reps.items()}
    details["pa_affine"] = pa_ok
    details["standard_detected_nonaffine"] = std_fails
    return SuiteResult("piecewise_affinity", pa_ok and std_fails, details)


def run_all(cfg) -> list[SuiteResult]:
    seed = cfg.seed
    return [
        suite_equivalence(cfg.exhaustive, cfg.random_pairs, seed),
        suite_error_bound(cfg.errscan_bits),
        suite_inverse(cfg.roundtrip_cases, seed + 1),
        suite_sign(min(cfg.random_pairs, 1_000_000), seed + 2),
        suite_gradients(cfg.gradcheck_points, seed + 3),
        suite_instrumentation(seed),
    ] + ([suite_affinity(cfg.affinity_segments, cfg.affinity_points, cfg.affinity_span, seed)]
         if cfg.affinity_segments else [])


def run(cfg, out_dir) -> int:
    results = run_all(cfg)
    lines = ["verification report", f"seed: {cfg.seed}", f"exhaustive_bf16: {cfg.exhaustive}", ""]
    for r in results:
        lines.extend(r.lines())
    failed = [r.name for r in results if not r.passed]
    lines.append("")
    lines.append("result: " + ("PASS" if not failed else "FAIL (" + ", ".join(failed) + ")"))
    text = "\n".join(lines) + "\n"
    (out_dir / "verify_report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 1 if failed else 0
