"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` or ``python3 tests/test_acceptance.py``.
Criteria 1 to 9 return the counts they produced so that criterion 13 can
recompute them under several thread counts.
"""

import functools
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mvtlab.counter import CounterConfig, brute_oracle, count_exact, count_windowed
from mvtlab.explab import (
    check_bound,
    interchange_check,
    lower_bound_check,
    preset_template,
    run_ladder,
)
from mvtlab.geometry import load_curve_library, nondegeneracy_scan, quadratic_fit_check, wronskian, wronskian_exact
from mvtlab.presets import get_preset
from mvtlab.sums import SIGMA_PRESETS, mc_moment, weyl_bound_rhs, weyl_sum
from mvtlab.systems import MomentSpec, PhaseTerm, spec_to_system

from randsys import random_system

pytestmark = pytest.mark.slow

# collected for the terminal summary (see conftest.py)
LINES = []


class Outcome:
    def __init__(self, ok, detail, counts=(), limit=None, elapsed=0.0):
        self.ok, self.detail, self.counts = ok, detail, list(counts)
        self.limit, self.elapsed = limit, elapsed

    @property
    def passed(self):
        return self.ok and (self.limit is None or self.elapsed <= self.limit)


def timed(limit):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(cfg):
            t0 = time.perf_counter()
            out = fn(cfg)
            out.limit, out.elapsed = limit, time.perf_counter() - t0
            return out

        return inner

    return wrap


def report(number, out):
    status = "PASS" if out.passed else "FAIL"
    timing = f" [{out.elapsed:.1f}s / {out.limit}s]" if out.limit else f" [{out.elapsed:.1f}s]"
    line = f"{status} criterion {number:2d}: {out.detail}{timing}"
    LINES.append(line)
    print(line, flush=True)
    return out.passed


def slope_of(name, ladder, cfg, **overrides):
    fit = run_ladder(preset_template(name, **overrides), ladder, cfg)
    return fit, [p.count for p in fit.points]


# --- criteria ----------------------------------------------------------------------


@timed(300)
def c01_oracle(cfg):
    rng = np.random.default_rng(20240601)
    systems = [random_system(rng, max_pairs=10**8, windowed=False) for _ in range(6)]
    systems += [random_system(rng, max_pairs=10**8) for _ in range(10)]
    systems += [random_system(rng, max_pairs=10**8, split=True) for _ in range(4)]
    counts, bad = [], []
    for i, sys_ in enumerate(systems):
        assert sys_.range_size ** (2 * sys_.s) <= 10**8
        fast = (count_windowed if sys_.windowed_forms else count_exact)(sys_, cfg).count
        counts.append(fast)
        if fast != brute_oracle(sys_).count:
            bad.append(i)
    n_win = sum(bool(s.windowed_forms) for s in systems)
    detail = f"{len(systems)} random systems ({n_win} windowed, {len(systems) - n_win} exact), mismatches {bad}"
    return Outcome(not bad and len(systems) >= 20, detail, counts)


@timed(120)
def c02_i6(cfg):
    fit, counts = slope_of("i6", [64, 128, 256, 512], cfg, **{"lambda": -3})
    return Outcome(2.9 <= fit.slope <= 3.35, f"I_6(N^-3) slope {fit.slope:.3f} in [2.9, 3.35]", counts)


@timed(300)
def c03_n8(cfg):
    fit, counts = slope_of("n8", [32, 64, 128, 256], cfg, delta=-2)
    return Outcome(3.7 <= fit.slope <= 4.4, f"N_8(N^-2) slope {fit.slope:.3f} in [3.7, 4.4]", counts)


@timed(600)
def c04_i8(cfg):
    fit, counts = slope_of("i8", [32, 48, 64, 96, 128], cfg, **{"lambda": Fraction(-7, 3)})
    v = check_bound(fit, Fraction(13, 3))
    return Outcome(fit.slope <= 4.7, f"I_8(N^-7/3) slope {fit.slope:.3f} <= 4.7 (claim 13/3: {v.verdict})", counts)


@timed(900)
def c05_i10(cfg):
    fit, counts = slope_of("i10", [24, 32, 48, 64], cfg, **{"lambda": Fraction(-5, 3)})
    v = check_bound(fit, Fraction(17, 3))
    ok = 4.8 <= fit.slope <= 6.0
    return Outcome(ok, f"I_10(N^-5/3) slope {fit.slope:.3f} in [4.8, 6.0] (claim 17/3: {v.verdict})", counts)


@timed(1200)
def c06_n10_regimes(cfg):
    ladder = [24, 32, 48, 64]
    low, c1 = slope_of("n10", ladder, cfg, delta=-2, Delta="delta*N")
    high, c2 = slope_of("n10", ladder, cfg, delta=Fraction(-6, 5), Delta="delta*N")
    ok = low.slope <= 5.35 and high.slope > 5.35
    detail = f"N_10(delta, delta N) slope {low.slope:.3f} <= 5.35 at N^-2, {high.slope:.3f} > 5.35 at N^-1.2"
    return Outcome(ok, detail, c1 + c2)


@timed(300)
def c07_lower_bound(cfg):
    N = 64
    rep = lower_bound_check(N, N**-1.5, 1 / N, c=1e-2, audit_constant=10.0, config=cfg)
    detail = (
        f"scaled window count {rep['scaled_count']:.3e} >= {rep['lower_bound']:.3e}: {rep['lower_ok']}; "
        f"full count / three-term rhs = {rep['upper_ratio']:.2f} <= 10: {rep['upper_ok']}"
    )
    return Outcome(rep["lower_ok"] and rep["upper_ok"], detail, [rep["restricted_count"], rep["full_count"]])


INTERCHANGE_SETS = [
    (32, -1.8, 0.6, 2.0),
    (32, -1.7, 0.5, 2.0),
    (48, -1.8, 0.6, 2.0),
    (48, -1.6, 0.4, 2.0),
    (48, -1.9, 0.7, 3.0),
]


@timed(600)
def c08_interchange(cfg):
    ratios, counts = [], []
    for N, e, frac, T in INTERCHANGE_SETS:
        d = N**e
        rep = interchange_check(N, d, frac * d * N, T, config=cfg)
        ratios.append(rep["ratio"])
        counts += [rep["count_lhs"], rep["count_scaled"], rep["count_narrow"]]
    return Outcome(max(ratios) <= 10, f"interchange ratios {[round(r, 3) for r in ratios]} all <= 10", counts)


@timed(300)
def c09_bilinear(cfg):
    fit, counts = slope_of("bilinear-n3", [16, 32, 64], cfg)
    return Outcome(fit.slope <= 4.5, f"bilinear mixed-count slope {fit.slope:.3f} <= 4.5", counts)


@timed(60)
def c10_geometry(cfg):
    lib = load_curve_library()
    wrong, worst_h, worst_w = [], 0.0, 0.0
    for name, (curve, expected) in lib.items():
        if nondegeneracy_scan(curve, 8).degenerate != expected:
            wrong.append(name)
        for t in np.linspace(*curve.domain, 7):
            for k in (1, 2):
                ex = float(wronskian_exact(curve, k, t))
                if ex:
                    worst_w = max(worst_w, abs(wronskian(curve, k, t) - ex) / abs(ex))
        if not expected:
            mid = [(a + b) / 2 for a, b in curve.sub_intervals]
            worst_h = max(worst_h, max(quadratic_fit_check(curve, mid, 1e-4).central_rel_error))
    ok = len(lib) >= 5 and not wrong and worst_h <= 1e-4 and worst_w <= 1e-12
    detail = f"{len(lib)} curves, misclassified {wrong}, sff vs Hessian {worst_h:.1e}, Wronskian {worst_w:.1e}"
    return Outcome(ok, detail)


@timed(300)
def c11_monte_carlo(cfg):
    spec = MomentSpec(16, 4, (PhaseTerm(1), PhaseTerm(2)))
    exact = count_exact(spec_to_system(spec), cfg).count
    zs = []
    for seed in (1, 2, 3):
        est = mc_moment(spec, 200_000, seed)
        zs.append((est.mean - exact) / est.stderr)
    P = get_preset("n8")
    rules = P.rules({"delta": -1})
    window = count_windowed(P.system(32, rules), cfg).count
    mc = mc_moment(P.moment_spec(32, rules), 400_000, 11).mean
    ok = all(abs(z) <= 4 for z in zs) and window / 8 <= mc <= 8 * window
    detail = f"z-scores {[round(z, 2) for z in zs]} vs count {exact}; N_8 MC/count = {mc / window:.3f}"
    return Outcome(ok, detail)


@timed(60)
def c12_weyl(cfg):
    N = 2**10
    sigma = SIGMA_PRESETS["decoupling"]
    assert sigma == Fraction(56, 15) / 256
    rng = np.random.default_rng(7)
    worst, pairs = 0.0, 0
    while pairs < 50:
        q = int(rng.integers(N**4 // 4, 4 * N**4))
        a = int(rng.integers(1, q))
        if math.gcd(a, q) != 1:
            continue
        pairs += 1
        worst = max(worst, abs(weyl_sum(a, q, N)) / weyl_bound_rhs(a, q, N, sigma))
    trivial = complex(weyl_sum(0, 1, N)) == N and complex(weyl_sum(1, 2, N)) == 0
    ok = worst <= 1 and trivial
    return Outcome(ok, f"max |f_8|/rhs over {pairs} pairs = {worst:.3f}; trivial identities exact: {trivial}")


COUNTING = [c01_oracle, c02_i6, c03_n8, c04_i8, c05_i10, c06_n10_regimes, c07_lower_bound, c08_interchange, c09_bilinear]


@functools.lru_cache(maxsize=None)
def outcome(fn, workers=1):
    return fn(CounterConfig(workers=workers))


@timed(None)
def c13_determinism(cfg):
    diffs = []
    for fn in COUNTING:
        base = outcome(fn).counts
        for w in (4, 8):
            if outcome(fn, w).counts != base:
                diffs.append((fn.__name__, w))
    return Outcome(not diffs, f"counts of criteria 1-9 identical under 1, 4, 8 workers; differences {diffs}")


ALL = COUNTING + [c10_geometry, c11_monte_carlo, c12_weyl, c13_determinism]


@pytest.mark.parametrize("number", range(1, 14))
def test_criterion(number):
    assert report(number, outcome(ALL[number - 1]))


if __name__ == "__main__":
    results = [report(i, outcome(fn)) for i, fn in enumerate(ALL, 1)]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
