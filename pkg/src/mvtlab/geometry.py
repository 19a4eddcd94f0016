"""Curvature diagnostics for the sumset of n-1 arcs of a curve t -> (t, phi_1(t), ..., phi_{n-1}(t)).

Polynomials are coefficient vectors in ascending order. Derivatives are taken
exactly on the coefficients; evaluation is in float64, or in exact rationals
for the ``*_exact`` variants.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import PreconditionError, SingularMatrixError
from .systems import as_rational

DEGENERACY_THRESHOLD = 1e-9
SINGULAR_THRESHOLD = 1e-12


def poly_derivative(coeffs: Sequence, k: int = 1) -> list:
    c = list(coeffs)
    for _ in range(k):
        c = [i * c[i] for i in range(1, len(c))]
    return c


def poly_eval(coeffs: Sequence, t):
    acc = 0 * t
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


def taylor_power(gamma, degree: int, center=1) -> list:
    """Coefficients (in t) of the degree-d Taylor polynomial of t^gamma about ``center``."""
    g, t0 = as_rational(gamma), as_rational(center)
    if t0 <= 0:
        raise PreconditionError("expansion center must be positive")
    out = [Fraction(0)] * (degree + 1)
    binom = Fraction(1)
    for m in range(degree + 1):
        if m:
            binom = binom * (g - m + 1) / m
        # binom(g, m) t0^{g-m} (t - t0)^m, expanded in powers of t
        scale = binom * _rational_power(t0, g - m)
        for i in range(m + 1):
            out[i] += scale * math.comb(m, i) * (-t0) ** (m - i)
    return out


def _rational_power(x: Fraction, e: Fraction) -> Fraction:
    if e.denominator == 1:
        return x ** int(e)
    if x == 1:
        return Fraction(1)
    raise PreconditionError("non-integer powers of a center other than 1 are not rational")


def taylor_tail_bound(gamma, degree: int, radius: float) -> float:
    """Bound on |t^gamma - taylor_power(gamma, degree, 1)| for |t - 1| <= radius < 1."""
    g = as_rational(gamma)
    if not 0 <= radius < 1:
        raise PreconditionError("radius must lie in [0, 1)")
    if degree + 1 < g:
        raise PreconditionError("degree too small for a geometric tail bound")
    b = Fraction(1)
    for m in range(1, degree + 2):
        b = b * (g - m + 1) / m
    return abs(float(b)) * radius ** (degree + 1) / (1 - radius)


@dataclass(frozen=True)
class CurveSpec:
    phis: tuple
    domain: tuple = (0.5, 1.0)
    sub_intervals: tuple = ()
    name: str = ""

    def __post_init__(self):
        phis = tuple(tuple(as_rational(c) if not isinstance(c, float) else c for c in p) for p in self.phis)
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "domain", tuple(self.domain))
        object.__setattr__(self, "sub_intervals", tuple(tuple(iv) for iv in self.sub_intervals))
        if self.n < 3:
            raise PreconditionError("a curve needs at least two phi components (n >= 3)")
        for p in phis:
            if _degree(p) < 2:
                raise PreconditionError("each phi must have degree >= 2")
        a, b = self.domain
        if not 0 <= a < b <= 1:
            raise PreconditionError(f"domain {self.domain} must lie inside [0, 1]")
        if self.sub_intervals:
            if len(self.sub_intervals) != self.n - 1:
                raise PreconditionError(f"need {self.n - 1} sub-intervals, got {len(self.sub_intervals)}")
            prev = -math.inf
            for lo, hi in self.sub_intervals:
                if not (a <= lo < hi <= b):
                    raise PreconditionError(f"sub-interval [{lo}, {hi}] is not inside the domain")
                if lo <= prev:
                    raise PreconditionError("sub-intervals must be disjoint and ordered")
                prev = hi

    @property
    def n(self) -> int:
        return len(self.phis) + 1

    def float_coeffs(self, k: int = 0) -> list:
        return [np.array([float(c) for c in poly_derivative(p, k)] or [0.0]) for p in self.phis]

    def derivative_matrix(self, k: int, ts) -> np.ndarray:
        """M[i][j] = phi_i^{(k)}(ts[j])."""
        ts = np.asarray(ts, float)
        return np.array([np.polynomial.polynomial.polyval(ts, c) for c in self.float_coeffs(k)])

    def scaled(self, factors) -> "CurveSpec":
        phis = [[c * f for c in p] for p, f in zip(self.phis, factors)]
        return CurveSpec(tuple(phis), self.domain, self.sub_intervals, self.name)


def _degree(p) -> int:
    d = len(p) - 1
    while d > 0 and p[d] == 0:
        d -= 1
    return d


def _check_in_domain(curve: CurveSpec, t: float):
    a, b = curve.domain
    if not a <= t <= b:
        raise PreconditionError(f"t = {t} lies outside the domain [{a}, {b}]")


def _check_order(order: int):
    if order not in (1, 2, 3):
        raise PreconditionError(f"derivative order must be 1, 2 or 3, got {order}")


def wronskian_matrix(curve: CurveSpec, derivative_order: int, t: float) -> np.ndarray:
    m = curve.n - 1
    return np.array(
        [[np.polynomial.polynomial.polyval(t, c) for c in curve.float_coeffs(derivative_order + j)] for j in range(m)]
    ).T


def wronskian(curve: CurveSpec, derivative_order: int, t: float) -> float:
    """W(phi_1^{(k)}, ..., phi_{n-1}^{(k)})(t): det of [phi_i^{(k+j)}(t)]."""
    _check_order(derivative_order)
    _check_in_domain(curve, t)
    return float(np.linalg.det(wronskian_matrix(curve, derivative_order, t)))


def det_exact(rows) -> Fraction:
    a = [[Fraction(x) for x in r] for r in rows]
    n, det = len(a), Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if a[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            if f:
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    return det


def wronskian_exact(curve: CurveSpec, derivative_order: int, t) -> Fraction:
    """Same determinant in exact rational arithmetic (t is converted exactly)."""
    _check_order(derivative_order)
    tq = Fraction(t)
    _check_in_domain(curve, float(tq))
    m = curve.n - 1
    rows = [
        [poly_eval([Fraction(c) for c in poly_derivative(p, derivative_order + j)], tq) for j in range(m)]
        for p in curve.phis
    ]
    return det_exact(rows)


def _hadamard_ratio(M: np.ndarray) -> float:
    """|det M| divided by the product of its row norms; invariant under row scaling, in [0, 1]."""
    norms = np.linalg.norm(M, axis=1)
    if np.any(norms == 0):
        return 0.0
    return float(abs(np.linalg.det(M)) / np.prod(norms))


def _check_membership(curve: CurveSpec, t):
    if len(t) != curve.n - 1:
        raise PreconditionError(f"need {curve.n - 1} parameters, got {len(t)}")
    if not curve.sub_intervals:
        raise PreconditionError("curve has no sub-intervals")
    for j, (tj, (lo, hi)) in enumerate(zip(t, curve.sub_intervals)):
        if not lo <= tj <= hi:
            raise PreconditionError(f"t_{j + 1} = {tj} is not in I_{j + 1} = [{lo}, {hi}]")


def build_D1_D2(curve: CurveSpec, t) -> tuple:
    """D1[i][j] = phi_i'(t_j), D2[i][j] = phi_i''(t_j)."""
    t = [float(x) for x in t]
    _check_membership(curve, t)
    return curve.derivative_matrix(1, t), curve.derivative_matrix(2, t)


def sff_coefficients(curve: CurveSpec, t) -> np.ndarray:
    """<D1^{-1} D2 e_j, xi> for j = 1..n-1 with xi = (1, ..., 1)."""
    D1, D2 = build_D1_D2(curve, t)
    if _hadamard_ratio(D1) < SINGULAR_THRESHOLD:
        raise SingularMatrixError(f"D1 is singular at t = {list(t)} (scaled determinant below {SINGULAR_THRESHOLD})")
    y = np.linalg.solve(D1.T, np.ones(curve.n - 1))
    return D2.T @ y


# --- finite-difference validation of the quadratic expansion ------------------


def _increments(curve: CurveSpec, t, s) -> np.ndarray:
    """x'_i(s) = sum_k phi_i(t_k + s_k) - phi_i(t_k), via the exact Taylor shift (no cancellation)."""
    out = np.zeros(curve.n - 1)
    for i, p in enumerate(curve.phis):
        deg = _degree(p)
        for tk, sk in zip(t, s):
            fact, acc = 1.0, 0.0
            for m in range(1, deg + 1):
                fact *= m
                acc += np.polynomial.polynomial.polyval(tk, [float(c) for c in poly_derivative(p, m)]) * sk**m / fact
            out[i] += acc
    return out


def solve_graph(curve: CurveSpec, t, target, tol: float = 1e-15, max_iter: int = 50) -> tuple:
    """Find s with x'(s) = D1 @ target (i.e. x'' = target); returns (x0' = sum s, s)."""
    t = [float(x) for x in t]
    D1, _ = build_D1_D2(curve, t)
    rhs = D1 @ np.asarray(target, float)
    s = np.asarray(target, float).copy()
    for _ in range(max_iter):
        r = _increments(curve, t, s) - rhs
        J = curve.derivative_matrix(1, np.asarray(t) + s)
        step = np.linalg.solve(J, r)
        s -= step
        if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(s))):
            break
    return float(math.fsum(s)), s


@dataclass
class QuadraticFitReport:
    h: float
    sff: list
    one_sided: list
    central: list
    one_sided_error: list
    central_rel_error: list
    off_diagonal: list
    base_value: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def quadratic_fit_check(curve: CurveSpec, t, h: float) -> QuadraticFitReport:
    """Compare the graph x0'(x'') of the sumset near t with its predicted quadratic part.

    The graph is x0' = sum_j x''_j - 1/2 sum_j c_j (x''_j)^2 + O(|x''|^3), so
    2(h - G(h e_j))/h^2 -> c_j with error O(h), and the central second
    difference -H_jj -> c_j with error O(h^2).
    """
    t = [float(x) for x in t]
    _check_membership(curve, t)
    for j, (tj, (lo, hi)) in enumerate(zip(t, curve.sub_intervals)):
        if tj - h < lo or tj + h > hi:
            raise PreconditionError(f"step h = {h} leaves I_{j + 1} around t_{j + 1} = {tj}")
    c = sff_coefficients(curve, t)
    m = curve.n - 1
    base, _ = solve_graph(curve, t, np.zeros(m))
    one, cen, off = [], [], []
    G = lambda v: solve_graph(curve, t, v)[0]
    E = np.eye(m)
    for j in range(m):
        gp, gm = G(h * E[j]), G(-h * E[j])
        one.append(2 * (h - gp) / h**2)
        cen.append(-(gp - 2 * base + gm) / h**2)
        for k in range(j + 1, m):
            mixed = (G(h * (E[j] + E[k])) - gp - G(h * E[k]) + base) / h**2
            off.append(mixed)
    c_list = [float(x) for x in c]
    return QuadraticFitReport(
        h=h,
        sff=c_list,
        one_sided=one,
        central=cen,
        one_sided_error=[abs(a - b) for a, b in zip(one, c_list)],
        central_rel_error=[abs(a - b) / abs(b) if b else abs(a) for a, b in zip(cen, c_list)],
        off_diagonal=off,
        base_value=base,
    )


# --- scans --------------------------------------------------------------------


@dataclass
class GeometryReport:
    min_abs_wronskian: float
    min_abs_detD1: float
    min_abs_sff_coeffs: list
    grid: int
    degenerate: bool
    threshold: float = DEGENERACY_THRESHOLD
    name: str = ""
    implication_holds: bool = True
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def nondegeneracy_scan(curve: CurveSpec, grid_per_axis: int, threshold: float = DEGENERACY_THRESHOLD) -> GeometryReport:
    """Minima of the scaled Wronskian of the phi'' over the domain, and of the scaled
    det D1 and |sff coefficients| over the product grid of the sub-intervals."""
    if grid_per_axis < 4:
        raise PreconditionError("grid_per_axis must be >= 4")
    a, b = curve.domain
    w_grid = np.linspace(a, b, 16 * grid_per_axis)
    min_w = min(_hadamard_ratio(wronskian_matrix(curve, 2, t)) for t in w_grid)
    axes = [np.linspace(lo, hi, grid_per_axis) for lo, hi in curve.sub_intervals]
    m = curve.n - 1
    min_det, min_c = math.inf, [math.inf] * m
    for t in itertools.product(*axes):
        D1, D2 = build_D1_D2(curve, t)
        det = _hadamard_ratio(D1)
        min_det = min(min_det, det)
        if det < SINGULAR_THRESHOLD:
            min_c = [0.0] * m
            continue
        c = D2.T @ np.linalg.solve(D1.T, np.ones(m))
        min_c = [min(x, abs(float(v))) for x, v in zip(min_c, c)]
    w_bad = min_w < threshold
    sff_bad = min_det < threshold or min(min_c) < threshold
    notes = []
    if not w_bad and sff_bad:
        notes.append("Wronskian bounded away from zero but a second fundamental form coefficient vanishes")
    return GeometryReport(
        min_abs_wronskian=min_w,
        min_abs_detD1=min_det,
        min_abs_sff_coeffs=min_c,
        grid=grid_per_axis,
        degenerate=w_bad or sff_bad,
        threshold=threshold,
        name=curve.name,
        implication_holds=w_bad or not sff_bad,
        notes=notes,
    )


def split_domain(domain, parts: int, gap: float) -> tuple:
    """``parts`` equal consecutive sub-intervals separated by ``gap``."""
    a, b = domain
    width = (b - a - (parts - 1) * gap) / parts
    if width <= 0:
        raise PreconditionError("gap too large for the domain")
    return tuple((a + k * (width + gap), a + k * (width + gap) + width) for k in range(parts))


def separation_profile(curve: CurveSpec, gaps: Sequence[float], grid_per_axis: int = 8) -> list:
    """Scan minima as the sub-interval separation shrinks; reported, not asserted."""
    out = []
    for g in gaps:
        c = CurveSpec(curve.phis, curve.domain, split_domain(curve.domain, curve.n - 1, g), curve.name)
        rep = nondegeneracy_scan(c, grid_per_axis)
        out.append({"gap": g, "min_abs_detD1": rep.min_abs_detD1, "min_abs_sff_coeffs": rep.min_abs_sff_coeffs})
    return out


# --- curve library ------------------------------------------------------------


def _phi_from_entry(entry) -> list:
    if isinstance(entry, dict):
        return taylor_power(entry["taylor_power"], int(entry["degree"]), entry.get("center", 1))
    return [as_rational(str(c)) for c in entry]


def curve_from_dict(d: dict) -> CurveSpec:
    return CurveSpec(
        tuple(_phi_from_entry(p) for p in d["phis"]),
        tuple(float(as_rational(str(x))) for x in d.get("domain", ("1/2", "1"))),
        tuple(tuple(float(as_rational(str(x))) for x in iv) for iv in d["sub_intervals"]),
        d["name"],
    )


def load_curve_library(path=None) -> dict:
    """Named curves with an ``expect_degenerate`` flag: {name: (CurveSpec, bool)}."""
    if path is None:
        text = resources.files("mvtlab").joinpath("data/curves.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    out = {}
    for d in json.loads(text)["curves"]:
        out[d["name"]] = (curve_from_dict(d), bool(d.get("expect_degenerate", False)))
    return out
