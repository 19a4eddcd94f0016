"""Growth-exponent measurement over ladders of N, and bound checks."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .counter import CounterConfig, count
from .errors import CapacityError, PreconditionError
from .presets import Preset, get_preset
from .systems import Interval, WindowSystem

DEFAULT_BAND = (1.0, 0.35)
RESIDUAL_GATE = 0.1
AUDIT_CONSTANT = 10.0


@dataclass
class LadderPoint:
    N: int
    count: int
    params: dict = field(default_factory=dict)
    wall_time: float = 0.0
    engine: str = ""

    def to_dict(self) -> dict:
        return {"N": self.N, "count": self.count, "params": self.params}


@dataclass
class FitResult:
    points: list
    slope: float
    intercept: float
    max_residual: float

    def to_dict(self) -> dict:
        return {
            "ladder": [p.to_dict() for p in self.points],
            "slope": self.slope,
            "intercept": self.intercept,
            "max_residual": self.max_residual,
        }


@dataclass
class BoundVerdict:
    claimed_exponent: Fraction | float
    measured_slope: float
    band: tuple
    verdict: str
    max_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "claimed_exponent": str(self.claimed_exponent),
            "measured_slope": self.measured_slope,
            "band": list(self.band),
            "verdict": self.verdict,
            "max_residual": self.max_residual,
        }


@dataclass
class Template:
    """A family of counting systems indexed by N."""

    name: str
    build: Callable[[int], WindowSystem]
    params: Callable[[int], dict] = lambda N: {}
    claimed: Fraction | float | None = None
    citation: str = ""


def preset_template(name: str, window_constant: float = 1.0, **overrides) -> Template:
    """Template for a named preset with parameter overrides (exponents or expressions)."""
    P: Preset = get_preset(name)
    rules = P.rules(overrides)
    desc = ", ".join(f"{k}={r}" for k, r in rules.items())
    # the claimed exponent is read at a representative N; exponent rules make it N-independent
    return Template(
        name=f"{name}({desc})" if desc else name,
        build=lambda N: P.system(N, rules, window_constant),
        params=lambda N: P.resolve(N, rules),
        claimed=P.claimed_exponent(64, rules),
        citation=P.citation,
    )


def fit_exponent(points: Sequence[LadderPoint]) -> FitResult:
    """Least squares of log2(count) against log2(N)."""
    points = list(points)
    if len(points) < 3:
        raise PreconditionError("an exponent fit needs at least 3 points")
    Ns = [p.N for p in points]
    if len(set(Ns)) != len(Ns):
        raise PreconditionError(f"degenerate ladder: duplicate N in {Ns}")
    if any(p.count < 1 for p in points):
        raise PreconditionError("all counts must be >= 1 for a log-log fit")
    x = np.array([math.log2(n) for n in Ns])
    y = np.array([math.log2(p.count) for p in points])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return FitResult(points, float(slope), float(intercept), float(np.max(np.abs(resid))))


def check_bound(fit: FitResult, claimed, band_width: tuple = DEFAULT_BAND) -> BoundVerdict:
    """Compare a fitted slope with a claimed exponent.

    The band is [claimed - below, claimed + above]. A slope above the band is
    only called a violation when the fit is clean (max residual < 0.1).
    """
    below, above = band_width
    c = float(claimed)
    band = (c - below, c + above)
    if band[0] <= fit.slope <= band[1]:
        verdict = "consistent"
    elif fit.slope > band[1] and fit.max_residual < RESIDUAL_GATE:
        verdict = "violated"
    else:
        verdict = "inconclusive"
    return BoundVerdict(claimed, fit.slope, band, verdict, fit.max_residual)


def _point(template: Template, N: int, config: CounterConfig) -> LadderPoint:
    t0 = time.perf_counter()
    res = count(template.build(N), config)
    return LadderPoint(N, res.count, template.params(N), time.perf_counter() - t0, res.engine)


def run_ladder(
    template: Template, ladder: Sequence[int], config: CounterConfig | None = None, point_workers: int = 1
) -> FitResult:
    """Count every ladder point and fit the slope.

    On a capacity failure the error carries the points computed so far in ``partial``.
    """
    ladder = [int(n) for n in ladder]
    if len(ladder) < 3:
        raise PreconditionError("a ladder needs at least 3 values of N")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise PreconditionError(f"ladder must be strictly increasing, got {ladder}")
    cfg = config or CounterConfig()
    points = []
    if point_workers > 1:
        with ThreadPoolExecutor(max_workers=point_workers) as pool:
            futures = [pool.submit(_point, template, N, cfg) for N in ladder]
            for f in futures:
                try:
                    points.append(f.result())
                except CapacityError as exc:
                    raise CapacityError(str(exc), estimate=exc.estimate, budget=exc.budget, partial=points) from exc
    else:
        for N in ladder:
            try:
                points.append(_point(template, N, cfg))
            except CapacityError as exc:
                raise CapacityError(str(exc), estimate=exc.estimate, budget=exc.budget, partial=points) from exc
    return fit_exponent(points)


# --- N_10 checks ------------------------------------------------------------------


def n10_count(N: int, delta: float, Delta: float, config: CounterConfig | None = None, rng: Interval | None = None) -> int:
    P = get_preset("n10")
    sys_ = P.builder(N, {"delta": delta, "Delta": Delta}, 1.0, rng)
    return count(sys_, config).count


def interchange_hypotheses(N: int, delta: float, Delta: float, T: float) -> list:
    """The failed hypotheses, each as a readable inequality (empty when all hold)."""
    failed = []
    if not 1 / N > delta:
        failed.append(f"1/N > delta fails: delta = {delta!r} >= 1/N = {1 / N!r}")
    if not delta > 1 / N**2:
        failed.append(f"delta > 1/N^2 fails: delta = {delta!r} <= {1 / N**2!r}")
    if not 1 / N < Delta:
        failed.append(f"1/N < Delta fails: Delta = {Delta!r} <= 1/N = {1 / N!r}")
    if not Delta < delta * N:
        failed.append(f"Delta < delta N fails: Delta = {Delta!r} >= delta N = {delta * N!r}")
    if not T >= 2:
        failed.append(f"T >= 2 fails: T = {T!r}")
    if not T <= (delta * N) ** -0.5:
        failed.append(f"T <= (delta N)^(-1/2) fails: T = {T!r} > {(delta * N) ** -0.5!r}")
    return failed


def interchange_check(
    N: int,
    delta: float,
    Delta: float,
    T: float,
    C: float = 1.0,
    audit_constant: float = AUDIT_CONSTANT,
    config: CounterConfig | None = None,
) -> dict:
    """N_10(delta, Delta) against (1/T) N_10(T^2 delta, T Delta) + N_10(delta, C T delta)."""
    failed = interchange_hypotheses(N, delta, Delta, T)
    if failed:
        raise PreconditionError("; ".join(failed))
    lhs = n10_count(N, delta, Delta, config)
    a = n10_count(N, T * T * delta, T * Delta, config)
    b = n10_count(N, delta, C * T * delta, config)
    rhs = a / T + b
    ratio = lhs / rhs
    return {
        "N": N,
        "delta": delta,
        "Delta": Delta,
        "T": T,
        "C": C,
        "count_lhs": lhs,
        "count_scaled": a,
        "count_narrow": b,
        "rhs": rhs,
        "ratio": ratio,
        "audit_constant": audit_constant,
        "flag": ratio > audit_constant,
    }


def three_term_rhs(N: int, delta: float, Delta: float) -> float:
    return delta * Delta**0.75 * N**7 + (delta + Delta) * N**6 + N**5


def lower_bound_check(
    N: int,
    delta: float,
    Delta: float,
    c: float = 1e-2,
    audit_constant: float = AUDIT_CONSTANT,
    config: CounterConfig | None = None,
) -> dict:
    """Count N_10 over one short window of length M = round(Delta^{1/4} N), scale by N/M,
    and compare with c * delta * Delta^{3/4} * N^7; also the full count against the
    three-term upper bound times the audit constant."""
    if not delta <= Delta:
        raise PreconditionError(f"need delta <= Delta, got {delta} > {Delta}")
    if Delta**0.25 * N < 4:
        raise PreconditionError(f"Delta^(1/4) N = {Delta**0.25 * N:.3f} < 4")
    M = round(Delta**0.25 * N)
    full_range = Interval.dyadic(N)
    if M > full_range.size:
        raise PreconditionError(f"window length M = {M} exceeds the range size {full_range.size}")
    window = Interval(full_range.lo, full_range.lo + M - 1)
    restricted = n10_count(N, delta, Delta, config, window)
    scaled = Fraction(restricted * N, M)
    lower = c * delta * Delta**0.75 * N**7
    full = n10_count(N, delta, Delta, config)
    rhs = three_term_rhs(N, delta, Delta)
    return {
        "N": N,
        "delta": delta,
        "Delta": Delta,
        "M": M,
        "window": [window.lo, window.hi],
        "restricted_count": restricted,
        "scaled_count": float(scaled),
        "lower_bound": lower,
        "c": c,
        "lower_ok": float(scaled) >= lower,
        "full_count": full,
        "upper_rhs": rhs,
        "upper_ratio": full / rhs,
        "audit_constant": audit_constant,
        "upper_ok": full <= audit_constant * rhs,
    }


# --- reports ---------------------------------------------------------------------


def ladder_report(template: Template, fit: FitResult, verdicts: Sequence[BoundVerdict] = ()) -> dict:
    return {
        "template": template.name,
        "citation": template.citation,
        **fit.to_dict(),
        "verdicts": [v.to_dict() for v in verdicts],
    }


def ladder_csv(fit: FitResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "count", "log2_N", "log2_count"])
    for p in fit.points:
        w.writerow([p.N, p.count, repr(math.log2(p.N)), repr(math.log2(p.count))])
    return buf.getvalue()


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=str) + "\n"
