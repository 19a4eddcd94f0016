"""Named counting problems and the parameters they accept.

This table is the one place where moment families are mapped to counting
systems. Parameters delta, Delta and lambda are given either as exponents
(value N^e) or as arithmetic expressions in N, delta and lambda.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .errors import PreconditionError
from .systems import Interval, MomentSpec, PhaseTerm, SlotGroup, WindowedForm, WindowSystem, as_rational

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def eval_param_expr(text: str, env: dict) -> float:
    """Evaluate an arithmetic expression such as ``"delta*N"`` or ``"N**-1.5"``.

    Only numbers, the names in ``env`` and + - * / ** are allowed.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise PreconditionError(f"cannot parse parameter expression {text!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise PreconditionError(f"unknown name {node.id!r} in {text!r}; allowed: {sorted(env)}")
            return float(env[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise PreconditionError(f"unsupported syntax in parameter expression {text!r}")

    value = ev(tree)
    if not math.isfinite(value) or value <= 0:
        raise PreconditionError(f"parameter expression {text!r} gave {value}, expected a positive real")
    return value


def power_of(N: int, exponent) -> float:
    """N**exponent as a float, exact for integer exponents."""
    e = as_rational(exponent)
    if e.denominator == 1:
        return float(Fraction(N) ** int(e))
    return float(N) ** float(e)


@dataclass(frozen=True)
class ParamRule:
    """A parameter as a function of N: either N^exponent or an expression."""

    exponent: Fraction | None = None
    expression: str | None = None

    @classmethod
    def parse(cls, value) -> "ParamRule":
        if isinstance(value, ParamRule):
            return value
        if isinstance(value, (int, float, Fraction)) and not isinstance(value, bool):
            return cls(exponent=as_rational(value))
        text = str(value).strip()
        try:
            return cls(exponent=as_rational(text))
        except (ValueError, ZeroDivisionError):
            return cls(expression=text)

    def resolve(self, N: int, env: dict) -> float:
        if self.exponent is not None:
            return power_of(N, self.exponent)
        return eval_param_expr(self.expression, {**env, "N": N})

    def exponent_at(self, N: int, env: dict) -> float:
        """log_N of the resolved value (exact for exponent rules)."""
        if self.exponent is not None:
            return float(self.exponent)
        return math.log(self.resolve(N, env)) / math.log(N)

    def __str__(self):
        return f"N^{self.exponent}" if self.exponent is not None else self.expression


def _first_spacing(N, s, delta, Delta, c, rng):
    forms = [WindowedForm(Fraction(3, 2), c * delta, True)]
    if Delta is not None:
        forms.append(WindowedForm(Fraction(1, 2), c * Delta, True))
    return WindowSystem.symmetric(N, rng or Interval.dyadic(N), s, (1, 2), forms)


def _robert_sargos(N, s, lam, c, rng):
    return WindowSystem.symmetric(N, rng or Interval.dyadic(N), s, (2,), [WindowedForm(4, c / lam, False)])


def bilinear_intervals(N: int):
    """The two separated slot ranges (N/2, 5N/8] and (7N/8, N]."""
    return Interval.half_open(N // 2, 5 * N // 8), Interval.half_open(7 * N // 8, N)


def _bilinear(N, c):
    u1, u2 = bilinear_intervals(N)
    groups = [SlotGroup(u, 2, side) for side in ("left", "right") for u in (u1, u2)]
    # the phase N * (k/N)^{3/2} puts a window of 1/N on the normalized sums
    return WindowSystem(groups, (1, 2), [WindowedForm(Fraction(3, 2), c / N, True)], N)


def _claim_n8(e):
    return max(5 + e["delta"], 4)


def _claim_n10(e):
    d, D = e["delta"], e["Delta"]
    if abs(D - (d + 1)) < 1e-9 and -2 - 1e-9 <= d <= -33 / 18 + 1e-9:
        return Fraction(5)
    # three-term bound delta Delta^{3/4} N^7 + (delta + Delta) N^6 + N^5
    return max(7 + d + 0.75 * D, 6 + max(d, D), 5)


def _claim_ip(table):
    def claim(e):
        lam = e["lambda"]
        for threshold, value in table:
            if lam >= threshold - 1e-9:
                return value
        return None

    return claim


@dataclass(frozen=True)
class Preset:
    name: str
    citation: str
    s: int
    params: tuple
    defaults: dict
    builder: Callable
    claim: Callable | None = None
    default_ladder: tuple = ()
    spec_terms: Callable | None = field(default=None, repr=False)

    def rules(self, overrides: dict | None = None) -> dict:
        overrides = dict(overrides or {})
        unknown = set(overrides) - set(self.params)
        if unknown:
            raise PreconditionError(
                f"preset {self.name} does not take {sorted(unknown)}; parameters: {list(self.params)}"
            )
        merged = {**self.defaults, **overrides}
        return {k: ParamRule.parse(merged[k]) for k in self.params}

    def resolve(self, N: int, rules: dict) -> dict:
        env = {}
        for k in self.params:  # declared order lets Delta refer to delta
            env[k] = rules[k].resolve(N, env)
        return env

    def exponents(self, N: int, rules: dict) -> dict:
        env, out = {}, {}
        for k in self.params:
            env[k] = rules[k].resolve(N, env)
            out[k] = rules[k].exponent_at(N, env)
        return out

    def system(self, N: int, rules: dict, window_constant: float = 1.0, rng: Interval | None = None) -> WindowSystem:
        return self.builder(N, self.resolve(N, rules), window_constant, rng)

    def claimed_exponent(self, N: int, rules: dict):
        return None if self.claim is None else self.claim(self.exponents(N, rules))

    def moment_spec(self, N: int, rules: dict) -> MomentSpec:
        """The moment whose count this preset describes; needs exponent-form parameters."""
        if self.spec_terms is None:
            raise PreconditionError(f"preset {self.name} has no single-sum moment form")
        for k, r in rules.items():
            if r.exponent is None:
                raise PreconditionError(f"moment form of {self.name} needs {k} as an exponent of N")
        return MomentSpec(N, 2 * self.s, self.spec_terms({k: r.exponent for k, r in rules.items()}))


def _fs_terms(e):
    terms = [PhaseTerm(1), PhaseTerm(2), PhaseTerm(Fraction(3, 2), -e["delta"], True)]
    if "Delta" in e:
        terms.append(PhaseTerm(Fraction(1, 2), -e["Delta"], True))
    return terms


def _rs_terms(e):
    return [PhaseTerm(2), PhaseTerm(4, e["lambda"], False)]


PRESETS = {
    "n8": Preset(
        "n8",
        "N_8(delta): 8th moment of e(x0 n + x1 n^2 + x2 delta^-1 (n/N)^{3/2}); "
        "bound delta N^{5+eps} + N^{4+eps} (Bombieri-Iwaniec)",
        4,
        ("delta",),
        {"delta": -2},
        lambda N, p, c, r: _first_spacing(N, 4, p["delta"], None, c, r),
        _claim_n8,
        (32, 48, 64, 96, 128),
        _fs_terms,
    ),
    "n10": Preset(
        "n10",
        "N_10(delta, Delta): 10th moment with phases (n/N)^{3/2}/delta and (n/N)^{1/2}/Delta; "
        "N_10(delta, delta N) << N^{5+eps} for N^{-33/18} >= delta >= N^{-2}",
        5,
        ("delta", "Delta"),
        {"delta": -2, "Delta": "delta*N"},
        lambda N, p, c, r: _first_spacing(N, 5, p["delta"], p["Delta"], c, r),
        _claim_n10,
        (24, 32, 48, 64, 96),
        _fs_terms,
    ),
    "n12": Preset(
        "n12",
        "N_12(delta, Delta): 12th moment with the same phases as N_10",
        6,
        ("delta", "Delta"),
        {"delta": -2, "Delta": "delta*N"},
        lambda N, p, c, r: _first_spacing(N, 6, p["delta"], p["Delta"], c, r),
        None,
        (16, 24, 32, 48),
        _fs_terms,
    ),
    "i6": Preset(
        "i6",
        "I_6(lambda): 6th moment of e(n^2 x + lambda n^4 y); I_6(N^-3) << N^{3+eps} (Robert-Sargos)",
        3,
        ("lambda",),
        {"lambda": -3},
        lambda N, p, c, r: _robert_sargos(N, 3, p["lambda"], c, r),
        _claim_ip([(-3, Fraction(3))]),
        (64, 128, 256, 512),
        _rs_terms,
    ),
    "i8": Preset(
        "i8",
        "I_8(lambda): 8th moment of e(n^2 x + lambda n^4 y); I_8(N^{-7/3}) << N^{13/3+eps}",
        4,
        ("lambda",),
        {"lambda": Fraction(-7, 3)},
        lambda N, p, c, r: _robert_sargos(N, 4, p["lambda"], c, r),
        _claim_ip([(Fraction(-7, 3), Fraction(13, 3)), (Fraction(-5, 2), Fraction(9, 2))]),
        (32, 48, 64, 96, 128),
        _rs_terms,
    ),
    "i10": Preset(
        "i10",
        "I_10(lambda): 10th moment of e(n^2 x + lambda n^4 y); I_10(N^{-5/3}) << N^{17/3+eps}",
        5,
        ("lambda",),
        {"lambda": Fraction(-5, 3)},
        lambda N, p, c, r: _robert_sargos(N, 5, p["lambda"], c, r),
        _claim_ip([(Fraction(-5, 3), Fraction(17, 3)), (Fraction(-17, 8), Fraction(49, 8))]),
        (24, 32, 48, 64),
        _rs_terms,
    ),
    "bilinear-n3": Preset(
        "bilinear-n3",
        "bilinear mean value, n=3: || |S_U1| |S_U2| ||_4^4 with phase N (k/N)^{3/2}, "
        "U1=(N/2,5N/8], U2=(7N/8,N]; claimed N^{4+eps}",
        4,
        (),
        {},
        lambda N, p, c, r: _bilinear(N, c),
        lambda e: Fraction(4),
        (16, 32, 64),
        None,
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise PreconditionError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
