"""Direct evaluation of oscillatory sums.

Phases are reduced modulo 1 before multiplication by 2*pi: exactly (integer
arithmetic) for integer-coefficient phases, in extended precision otherwise.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .errors import PreconditionError
from .systems import Interval, MomentSpec, PhaseTerm, as_rational

TWO_PI = 2.0 * math.pi

# sigma(8) in |f_8(a/q; N)| << N^{1-sigma} (N^4/q + 1 + q/N^4)^{1/160}
SIGMA_PRESETS = {
    "bombieri-iwaniec": Fraction(3, 256),
    "wooley": Fraction(1, 84),
    "pila": Fraction(16, 5) / 256,
    "decoupling": Fraction(56, 15) / 256,
}


@dataclass(frozen=True)
class SumValue:
    real: float
    imag: float
    n_terms: int

    def __abs__(self):
        return math.hypot(self.real, self.imag)

    def __complex__(self):
        return complex(self.real, self.imag)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    samples: int
    seed: int


def _frac_exact(coeff: int, x: float) -> float:
    """frac(coeff * x) for an integer coefficient, exact up to the final rounding."""
    q = Fraction(x) * coeff
    return float(q - math.floor(q))


def _reduced_phases(spec: MomentSpec, x: Sequence[float]) -> np.ndarray:
    ns = list(spec.ns())
    total = np.zeros(len(ns), np.longdouble)
    for term, xj in zip(spec.terms, x):
        if xj == 0:
            continue
        if term.exact:
            k = int(term.power)
            total += np.array([_frac_exact(n**k, xj) for n in ns], np.longdouble)
        else:
            c = np.longdouble(spec.N) ** np.longdouble(float(term.amplitude_exponent))
            base = np.array(ns, np.longdouble)
            if term.normalized:
                base = base / np.longdouble(spec.N)
            ph = c * base ** np.longdouble(float(term.power)) * np.longdouble(xj)
            total += ph - np.floor(ph)
    return np.asarray(total - np.floor(total), dtype=np.float64)


def eval_exp_sum(spec: MomentSpec, x: Sequence[float]) -> SumValue:
    """sum over n in spec.range of e(sum_j c_j(n) x_j)."""
    x = [float(v) for v in x]
    if len(x) != len(spec.terms):
        raise PreconditionError(f"expected {len(spec.terms)} frequencies, got {len(x)}")
    if not all(math.isfinite(v) for v in x):
        raise PreconditionError("frequencies must be finite")
    ph = _reduced_phases(spec, x)
    ang = TWO_PI * ph
    return SumValue(float(np.cos(ang).sum()), float(np.sin(ang).sum()), len(ph))


def eval_exp_sum_reference(spec: MomentSpec, x: Sequence[float], dps: int = 40) -> SumValue:
    """Independent high-precision evaluation with mpmath, for cross-checking."""
    with mpmath.workdps(dps):
        N = mpmath.mpf(spec.N)
        acc = mpmath.mpc(0)
        for n in spec.ns():
            phase = mpmath.mpf(0)
            for term, xj in zip(spec.terms, x):
                base = mpmath.mpf(n) / N if term.normalized else mpmath.mpf(n)
                p = term.power
                c = N ** (mpmath.mpf(term.amplitude_exponent.numerator) / term.amplitude_exponent.denominator)
                phase += c * base ** (mpmath.mpf(p.numerator) / p.denominator) * mpmath.mpf(xj)
            acc += mpmath.expjpi(2 * phase)
        return SumValue(float(acc.real), float(acc.imag), spec.range.size)


def _coefficient_matrix(spec: MomentSpec) -> np.ndarray:
    ns = np.arange(spec.range.lo, spec.range.hi + 1, dtype=float)
    rows = []
    for t in spec.terms:
        base = ns / spec.N if t.normalized else ns
        rows.append(t.coefficient(spec.N) * base ** float(t.power))
    return np.array(rows)


def _mc_chunk(coeffs, p, seed_seq, m):
    rng = np.random.default_rng(seed_seq)
    X = rng.random((m, coeffs.shape[0]))
    ph = np.zeros((m, coeffs.shape[1]))
    for j in range(coeffs.shape[0]):
        t = X[:, j, None] * coeffs[j][None, :]
        ph += t - np.floor(t)
    S = np.exp(1j * TWO_PI * ph).sum(axis=1)
    v = np.abs(S) ** p
    mean = float(v.mean())
    return m, mean, float(((v - mean) ** 2).sum())


def mc_moment(spec: MomentSpec, samples: int, seed: int, workers: int = 1, chunk: int = 1 << 14) -> MCEstimate:
    """Monte Carlo estimate of the moment integral over the unit cube.

    Samples are drawn in fixed-size chunks, each from its own spawned seed
    stream, and merged in chunk order, so the result depends only on (seed, samples).
    """
    if samples < 1000:
        raise PreconditionError("mc_moment needs at least 1000 samples")
    coeffs = _coefficient_matrix(spec)
    sizes = [min(chunk, samples - a) for a in range(0, samples, chunk)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(streams, sizes))
    run = lambda job: _mc_chunk(coeffs, spec.p, job[0], job[1])
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    # Chan et al. pairwise merge of (count, mean, M2), in chunk order
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        tot = n + nb
        delta = mb - mean
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n = tot
    std = math.sqrt(m2 / (n - 1))
    return MCEstimate(mean, std / math.sqrt(n), n, seed)


def weyl_sum(a: int, q: int, N: int, k: int = 8) -> SumValue:
    """f_k(a/q; N) = sum_{1<=n<=N} e(a n^k / q), with exact modular phase reduction."""
    if q < 1:
        raise PreconditionError("q must be >= 1")
    if math.gcd(a, q) != 1:
        raise PreconditionError(f"gcd({a}, {q}) != 1")
    r = np.array([(a * pow(n, k, q)) % q for n in range(1, N + 1)], dtype=np.int64)
    ang = TWO_PI * (r / q)
    re, im = np.cos(ang), np.sin(ang)
    # quarter turns are exact, so e.g. q = 1 and q = 2 give exact integer sums
    quarter = (4 * r) % q == 0
    turns = (4 * r[quarter]) // q
    re[quarter] = np.array([1.0, 0.0, -1.0, 0.0])[turns]
    im[quarter] = np.array([0.0, 1.0, 0.0, -1.0])[turns]
    return SumValue(float(re.sum()), float(im.sum()), N)


def weyl_bound_rhs(a: int, q: int, N: int, sigma) -> float:
    """N^{1-sigma} (N^4/q + 1 + q/N^4)^{1/160}."""
    if math.gcd(a, q) != 1:
        raise PreconditionError(f"gcd({a}, {q}) != 1")
    sigma = float(as_rational(sigma)) if not isinstance(sigma, float) else sigma
    return N ** (1.0 - sigma) * (N**4 / q + 1.0 + q / N**4) ** (1.0 / 160.0)


# --- van der Corput partition sums ------------------------------------------


@dataclass(frozen=True)
class Monomial:
    """coefficient * (n/N)^power if normalized, else coefficient * n^power."""

    coefficient: float
    power: Fraction
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "power", as_rational(self.power))

    @classmethod
    def from_term(cls, term: PhaseTerm, N: int) -> "Monomial":
        return cls(term.coefficient(N), term.power, term.normalized)

    def third_derivative(self, n: np.ndarray, N: int) -> np.ndarray:
        g = float(self.power)
        c = self.coefficient * g * (g - 1) * (g - 2)
        if self.normalized:
            c /= float(N) ** g
        return c * np.asarray(n, float) ** (g - 3)


def _phase_values(phase: Sequence[Monomial], ns: np.ndarray, N: int) -> np.ndarray:
    total = np.zeros(ns.size, np.longdouble)
    for m in phase:
        base = ns.astype(np.longdouble)
        if m.normalized:
            base = base / np.longdouble(N)
        v = np.longdouble(m.coefficient) * base ** np.longdouble(float(m.power))
        total += v - np.floor(v)
    return np.asarray(total - np.floor(total), np.float64)


def partition_blocks(N: int, D: int) -> list:
    """Consecutive blocks of D integers covering (N/2, N]; the last may be shorter."""
    if D < 1:
        raise PreconditionError("block size D must be >= 1")
    rng = Interval.dyadic(N)
    return [Interval(a, min(a + D - 1, rng.hi)) for a in range(rng.lo, rng.hi + 1, D)]


def block_sums(phase: Sequence[Monomial], D: int, N: int) -> np.ndarray:
    rng = Interval.dyadic(N)
    ns = np.arange(rng.lo, rng.hi + 1)
    z = np.exp(1j * TWO_PI * _phase_values(phase, ns, N))
    return np.array([z[b.lo - rng.lo : b.hi - rng.lo + 1].sum() for b in partition_blocks(N, D)])


def vdc_partition_sum(phase: Sequence[Monomial], D: int, N: int) -> float:
    """sum_j |sum_{n in V_j} e(f(n))|^2 over the blocks V_j of size D in (N/2, N]."""
    return float(np.sum(np.abs(block_sums(phase, D, N)) ** 2))


def third_derivative_profile(phase: Sequence[Monomial], N: int):
    """(lambda3 = max |f'''| on (N/2, N], flags)."""
    rng = Interval.dyadic(N)
    ns = np.arange(rng.lo, rng.hi + 1, dtype=float)
    f3 = np.zeros(ns.size)
    for m in phase:
        f3 += m.third_derivative(ns, N)
    flags = []
    lam = float(np.max(np.abs(f3))) if ns.size else 0.0
    if lam == 0.0:
        flags.append("degenerate-phase")
    elif np.any(f3 > 0) and np.any(f3 < 0):
        flags.append("third-derivative-changes-sign")
    return lam, flags


def vdc_bounds(lambda3: float, D: int, N: int):
    """Right-hand sides of the two partition-sum estimates; the second is None unless D > lambda3^{-1/3}.

    With lambda3 = 0 the first bound is vacuous (infinite).
    """
    if lambda3 <= 0:
        return math.inf, None
    b_short = N + D**0.5 * lambda3**-0.5 + D**1.5 * lambda3**0.5 * N
    b_long = N * D * lambda3 ** (1 / 3) + D * lambda3 ** (-1 / 3) if D > lambda3 ** (-1 / 3) else None
    return b_short, b_long


@dataclass
class VdcReport:
    partition_sum: float
    full_sum_sq: float
    n_blocks: int
    lambda3: float
    bound_short: float
    bound_long: float | None
    ratio_short: float
    ratio_long: float | None
    audit_constant: float
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        # a vacuous (infinite) bound is reported as null
        return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in self.__dict__.items()}


def vdc_check(phase: Sequence[Monomial], D: int, N: int, audit_constant: float = 10.0) -> VdcReport:
    """Measured partition sum against both bounds; ratios are reported, never asserted."""
    sums = block_sums(phase, D, N)
    ps = float(np.sum(np.abs(sums) ** 2))
    lam, flags = third_derivative_profile(phase, N)
    b_short, b_long = vdc_bounds(lam, D, N)
    r_short = ps / b_short
    r_long = ps / b_long if b_long else None
    if r_short > audit_constant:
        flags.append("exceeds-audit-constant-short")
    if r_long is not None and r_long > audit_constant:
        flags.append("exceeds-audit-constant-long")
    return VdcReport(ps, float(abs(sums.sum()) ** 2), len(sums), lam, b_short, b_long, r_short, r_long, audit_constant, flags)
