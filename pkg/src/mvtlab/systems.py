"""Moment specifications, counting systems and the translation between them.

A moment ``int |sum_n e(sum_j c_j(n) x_j)|^p dx`` over the unit cube, with
``p = 2s``, counts pairs of ordered s-tuples whose phase-term sums agree.
Integer-valued phases give exact equations; real-valued phases scaled by a
large coefficient ``N^e`` only need to agree to within ``N^-e``.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import PrecisionError, PreconditionError

Rational = Fraction

DEFAULT_SCALE_BITS = 48
# fixed-point window values are kept below 2**61 so that v +- T fits in int64
_HEADROOM_BITS = 61


def as_rational(x) -> Fraction:
    """Coerce ints, strings like ``"3/2"`` and floats (via their repr) to a Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise PreconditionError(f"non-finite rational {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a rational")


def iroot(a: int, k: int) -> int:
    """Largest integer m with m**k <= a (a >= 0)."""
    if a < 0:
        raise ValueError("iroot of a negative number")
    if k == 1 or a < 2:
        return a
    if k == 2:
        return math.isqrt(a)
    m = 1 << -(-a.bit_length() // k)  # upper bound
    while True:
        nxt = ((k - 1) * m + a // m ** (k - 1)) // k
        if nxt >= m:
            break
        m = nxt
    while m ** k > a:
        m -= 1
    while (m + 1) ** k <= a:
        m += 1
    return m


def _pow_tolerance(N: int, exponent: Fraction) -> float:
    """N**exponent as a float, exact when the exponent is an integer."""
    if exponent.denominator == 1:
        return float(Fraction(N) ** int(exponent))
    return float(N) ** float(exponent)


@dataclass(frozen=True)
class Interval:
    """Inclusive integer interval ``{lo, ..., hi}``."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise PreconditionError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def dyadic(cls, N: int) -> "Interval":
        """The default ``n ~ N`` range ``(floor(N/2), N]``."""
        return cls(N // 2 + 1, N)

    @classmethod
    def half_open(cls, a: int, b: int) -> "Interval":
        """Integers in ``(a, b]``."""
        return cls(a + 1, b)

    @classmethod
    def parse(cls, text: str) -> "Interval":
        text = text.strip()
        m = re.fullmatch(r"(-?\d+)\s*\.\.\s*(-?\d+)", text)
        if m:
            return cls(int(m.group(1)), int(m.group(2)))
        m = re.fullmatch(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\]", text)
        if m:
            return cls.half_open(int(m.group(1)), int(m.group(2)))
        m = re.fullmatch(r"\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]", text)
        if m:
            return cls(int(m.group(1)), int(m.group(2)))
        raise PreconditionError(f"cannot parse interval {text!r}; use 'lo..hi', '(a,b]' or '[a,b]'")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, n) -> bool:
        return self.lo <= n <= self.hi

    def disjoint(self, other: "Interval") -> bool:
        return self.hi < other.lo or other.hi < self.lo

    def gap(self, other: "Interval") -> int:
        """Number of integers strictly between the two intervals (negative if they overlap)."""
        if self.hi < other.lo:
            return other.lo - self.hi - 1
        if other.hi < self.lo:
            return self.lo - other.hi - 1
        return -1

    def __str__(self):
        return f"{self.lo}..{self.hi}"


@dataclass(frozen=True)
class PhaseTerm:
    """One phase ``N^amplitude_exponent * g(n)`` with g(n) = (n/N)^power or n^power."""

    power: Fraction
    amplitude_exponent: Fraction = Fraction(0)
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "power", as_rational(self.power))
        object.__setattr__(self, "amplitude_exponent", as_rational(self.amplitude_exponent))
        if self.power < 0:
            raise PreconditionError(f"phase power must be >= 0, got {self.power}")

    @property
    def exact(self) -> bool:
        return self.power.denominator == 1 and self.amplitude_exponent == 0 and not self.normalized

    def coefficient(self, N: int) -> float:
        return _pow_tolerance(N, self.amplitude_exponent)

    def values(self, ns, N: int):
        """Real phase coefficients c(n) for an iterable of n (floats)."""
        c = self.coefficient(N)
        g = float(self.power)
        if self.normalized:
            return [c * (n / N) ** g for n in ns]
        return [c * float(n) ** g for n in ns]


@dataclass(frozen=True)
class MomentSpec:
    """An even moment of an exponential sum over ``n in range``."""

    N: int
    p: int
    terms: tuple
    range: Interval | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.range is None:
            object.__setattr__(self, "range", Interval.dyadic(self.N))
        if self.N < 4:
            raise PreconditionError(f"N must be >= 4, got {self.N}")
        if self.p <= 0 or self.p % 2:
            raise PreconditionError(f"moment order p must be a positive even integer, got {self.p}")
        if not self.terms:
            raise PreconditionError("a moment needs at least one phase term")
        powers = [t.power for t in self.terms]
        if len(set(powers)) != len(powers):
            raise PreconditionError(f"phase powers must be distinct, got {[str(x) for x in powers]}")

    @property
    def s(self) -> int:
        return self.p // 2

    def ns(self) -> range:
        return range(self.range.lo, self.range.hi + 1)


@dataclass(frozen=True)
class SlotGroup:
    """``multiplicity`` tuple slots on one side, each ranging over ``interval``."""

    interval: Interval
    multiplicity: int
    side: str

    def __post_init__(self):
        if self.multiplicity < 1:
            raise PreconditionError("slot multiplicity must be >= 1")
        if self.side not in ("left", "right"):
            raise PreconditionError(f"side must be 'left' or 'right', got {self.side!r}")


@dataclass(frozen=True)
class WindowedForm:
    """Constraint ``|sum_left g - sum_right g| <= tolerance``."""

    power: Fraction
    tolerance: float
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "power", as_rational(self.power))
        object.__setattr__(self, "tolerance", float(self.tolerance))
        if self.power < 0:
            raise PreconditionError("windowed power must be >= 0")
        if not self.tolerance >= 0:
            raise PreconditionError(f"tolerance must be >= 0, got {self.tolerance}")

    @property
    def integer_valued(self) -> bool:
        return self.power.denominator == 1 and not self.normalized

    def g(self, n: int, N: int) -> float:
        if self.normalized:
            return (n / N) ** float(self.power)
        return float(n) ** float(self.power)


@dataclass(frozen=True)
class WindowSystem:
    """A Diophantine counting problem: exact power sums plus windowed sums."""

    groups: tuple
    exact_forms: tuple
    windowed_forms: tuple
    N: int

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "exact_forms", tuple(int(k) for k in self.exact_forms))
        object.__setattr__(self, "windowed_forms", tuple(self.windowed_forms))
        left = sum(g.multiplicity for g in self.groups if g.side == "left")
        right = sum(g.multiplicity for g in self.groups if g.side == "right")
        if left < 1 or left != right:
            raise PreconditionError(f"left and right must have the same s >= 1, got {left} vs {right}")
        for side in ("left", "right"):
            gs = self.side(side)
            for a, b in zip(gs, gs[1:]):
                if not a.interval.disjoint(b.interval):
                    raise PreconditionError(f"{side} slot groups {a.interval} and {b.interval} overlap")
        if len(set(self.exact_forms)) != len(self.exact_forms):
            raise PreconditionError("exact powers must be pairwise distinct")
        if any(k < 1 for k in self.exact_forms):
            raise PreconditionError("exact powers must be >= 1")
        for f in self.windowed_forms:
            if f.integer_valued and f.tolerance == 0:
                raise PreconditionError(f"windowed power {f.power} with zero tolerance is an exact form")

    @classmethod
    def symmetric(cls, N: int, interval: Interval, s: int, exact_forms=(), windowed_forms=()):
        groups = (SlotGroup(interval, s, "left"), SlotGroup(interval, s, "right"))
        return cls(groups, tuple(exact_forms), tuple(windowed_forms), N)

    def side(self, name: str) -> tuple:
        return tuple(sorted((g for g in self.groups if g.side == name), key=lambda g: g.interval.lo))

    @property
    def s(self) -> int:
        return sum(g.multiplicity for g in self.groups if g.side == "left")

    @property
    def symmetric_sides(self) -> bool:
        strip = lambda gs: [(g.interval, g.multiplicity) for g in gs]
        return strip(self.side("left")) == strip(self.side("right"))

    def ordered_tuples(self, side: str) -> int:
        return math.prod(g.interval.size ** g.multiplicity for g in self.side(side))

    @property
    def range_size(self) -> int:
        """Size of the single common range; for multi-group sides, the union size on the left."""
        return sum(g.interval.size for g in self.side("left"))

    def with_tolerances(self, *tolerances) -> "WindowSystem":
        if len(tolerances) != len(self.windowed_forms):
            raise PreconditionError("one tolerance per windowed form is required")
        forms = tuple(replace(f, tolerance=t) for f, t in zip(self.windowed_forms, tolerances))
        return replace(self, windowed_forms=forms)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "s": self.s,
            "groups": [
                {"side": g.side, "interval": [g.interval.lo, g.interval.hi], "multiplicity": g.multiplicity}
                for g in self.side("left") + self.side("right")
            ],
            "exact_forms": list(self.exact_forms),
            "windowed_forms": [
                {"power": str(f.power), "tolerance": f.tolerance, "normalized": f.normalized}
                for f in self.windowed_forms
            ],
        }

    def fingerprint(self, scale_bits: int = DEFAULT_SCALE_BITS, extra: str = "") -> bytes:
        """32-byte SHA-256 digest of the canonical system description."""
        payload = self.to_dict()
        # repr keeps every bit of the float tolerance
        for f, d in zip(self.windowed_forms, payload["windowed_forms"]):
            d["tolerance"] = repr(f.tolerance)
        payload["scale_bits"] = scale_bits
        payload["extra"] = extra
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()


@dataclass(frozen=True, order=True)
class FixedPoint:
    """A real number stored as ``round(x * 2**scale_bits)``."""

    value: int
    scale_bits: int = field(default=DEFAULT_SCALE_BITS, compare=False)

    @classmethod
    def from_real(cls, x, scale_bits: int = DEFAULT_SCALE_BITS) -> "FixedPoint":
        q = Fraction(x) * (1 << scale_bits)
        return cls(math.floor(q + Fraction(1, 2)), scale_bits)

    @classmethod
    def from_power(cls, n: int, power, N: int | None = None, scale_bits: int = DEFAULT_SCALE_BITS):
        """Correctly rounded ``(n/N)**power`` (or ``n**power`` when N is None)."""
        return cls(fixed_power(n, as_rational(power), N, scale_bits), scale_bits)

    def _check(self, other):
        if not isinstance(other, FixedPoint) or other.scale_bits != self.scale_bits:
            raise TypeError("fixed-point operands must share scale_bits")

    def __add__(self, other):
        self._check(other)
        return FixedPoint(self.value + other.value, self.scale_bits)

    def __sub__(self, other):
        self._check(other)
        return FixedPoint(self.value - other.value, self.scale_bits)

    def __neg__(self):
        return FixedPoint(-self.value, self.scale_bits)

    def __abs__(self):
        return FixedPoint(abs(self.value), self.scale_bits)

    def __float__(self):
        return self.value / float(1 << self.scale_bits)

    def within(self, other: "FixedPoint", tolerance: "FixedPoint") -> bool:
        self._check(other)
        return abs(self.value - other.value) <= tolerance.value


def fixed_power(n: int, power: Fraction, N: int | None, scale_bits: int) -> int:
    """round(g * 2**scale_bits) for g = (n/N)**power, computed in exact integer arithmetic."""
    p, q = power.numerator, power.denominator
    den = 1 if N is None else N ** p
    # floor(2 g 2^k) = iroot(floor(n^p 2^{(k+1)q} / N^p), q); then round half up
    twice = iroot((n ** p << ((scale_bits + 1) * q)) // den, q)
    return (twice + 1) >> 1


def fixed_tolerance(tolerance: float, scale_bits: int) -> int:
    """floor(T * 2**scale_bits), saturated to the int64-safe ceiling for huge or infinite T."""
    cap = 1 << 62
    if math.isinf(tolerance):
        return cap
    v = math.floor(Fraction(tolerance) * (1 << scale_bits))
    return min(v, cap)


def window_scale(form: WindowedForm, s: int, N: int, max_n: int, scale_bits: int) -> int:
    """Fixed-point scale for one windowed form, reduced if the s-fold sums would overflow."""
    gmax = form.g(max_n, N)
    bound = s * gmax + 1.0
    need = math.ceil(math.log2(bound)) if bound > 1 else 0
    k = min(scale_bits, _HEADROOM_BITS - need)
    if k < 0:
        raise PrecisionError(f"windowed sums of n^{form.power} overflow the 64-bit fixed-point range")
    if not form.integer_valued and 0 < form.tolerance < 2 * s * 2.0 ** -k:
        raise PrecisionError(
            f"tolerance {form.tolerance:.3e} for power {form.power} is below the fixed-point "
            f"resolution 2s*2^-{k} = {2 * s * 2.0 ** -k:.3e}"
        )
    return k


def spec_to_system(spec: MomentSpec, window_constant: float = 1.0) -> WindowSystem:
    """Translate a moment into the equivalent counting problem.

    Exact phases become exact power-sum equations. A phase
    ``N^e * g(n)`` becomes the window ``|sum g(n_i) - sum g(m_i)| <= c * N^-e``.
    """
    exact, windowed = [], []
    for t in spec.terms:
        if t.exact:
            exact.append(int(t.power))
        else:
            T = window_constant * _pow_tolerance(spec.N, -t.amplitude_exponent)
            windowed.append(WindowedForm(t.power, T, t.normalized))
    return WindowSystem.symmetric(spec.N, spec.range, spec.s, exact, windowed)


_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def parse_spec_text(text: str) -> tuple[MomentSpec, float]:
    """Parse the ``key = value`` spec format; returns (spec, window_constant)."""
    N = p = rng = None
    terms = []
    c = 1.0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PreconditionError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (x.strip() for x in line.split("=", 1))
        key = key.lower()
        if key == "n":
            N = int(value)
        elif key == "p":
            p = int(value)
        elif key == "range":
            rng = Interval.parse(value)
        elif key == "window_constant":
            c = float(value)
        elif key == "term":
            parts = [x.strip() for x in value.split(",")]
            if len(parts) != 3 or parts[2].lower() not in _BOOL:
                raise PreconditionError(f"line {lineno}: term = power, amplitude_exponent, normalized")
            terms.append(PhaseTerm(as_rational(parts[0]), as_rational(parts[1]), _BOOL[parts[2].lower()]))
        else:
            raise PreconditionError(f"line {lineno}: unknown key {key!r}")
    if N is None or p is None:
        raise PreconditionError("spec file must set N and p")
    return MomentSpec(N, p, tuple(terms), rng), c


def load_spec(path) -> tuple[MomentSpec, float]:
    return parse_spec_text(Path(path).read_text())


def interval_values(interval: Interval) -> Sequence[int]:
    return range(interval.lo, interval.hi + 1)


def describe_terms(terms: Iterable[PhaseTerm]) -> list:
    return [
        {"power": str(t.power), "amplitude_exponent": str(t.amplitude_exponent), "normalized": t.normalized}
        for t in terms
    ]
