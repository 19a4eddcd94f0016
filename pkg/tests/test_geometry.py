import math
from fractions import Fraction

import numpy as np
import pytest

from mvtlab.errors import PreconditionError, SingularMatrixError
from mvtlab.geometry import (
    CurveSpec,
    build_D1_D2,
    det_exact,
    load_curve_library,
    nondegeneracy_scan,
    poly_derivative,
    quadratic_fit_check,
    separation_profile,
    sff_coefficients,
    split_domain,
    taylor_power,
    taylor_tail_bound,
    wronskian,
    wronskian_exact,
)

T2 = (0, 0, 1)
T3 = (0, 0, 0, 1)
T4 = (0, 0, 0, 0, 1)
TWO_ARCS = ((0.5, 0.7), (0.8, 1.0))


@pytest.fixture(scope="module")
def library():
    return load_curve_library()


def test_poly_derivative():
    assert poly_derivative([1, 2, 3, 4], 2) == [6, 24]
    assert poly_derivative([5], 1) == []


def test_taylor_power_exact_coefficients():
    # t^2 about 1 is exact at degree 2
    assert taylor_power(2, 2) == [0, 0, 1]
    c = taylor_power(Fraction(1, 2), 8)
    t = 0.8
    approx = sum(float(x) * t**i for i, x in enumerate(c))
    assert abs(approx - math.sqrt(t)) <= taylor_tail_bound(Fraction(1, 2), 8, 0.2)


def test_wronskian_exact_and_float_agree():
    curve = CurveSpec((T2, T3))
    assert wronskian_exact(curve, 2, Fraction(3, 4)) == 12
    assert wronskian_exact(curve, 1, Fraction(3, 4)) == Fraction(27, 8)
    assert wronskian(curve, 1, 0.75) == pytest.approx(27 / 8, rel=1e-14)
    cubic = CurveSpec((T2, T3, T4))
    assert wronskian_exact(cubic, 2, Fraction(1, 2)) == 288
    assert wronskian(cubic, 2, 0.9) == pytest.approx(float(wronskian_exact(cubic, 2, Fraction(9, 10))), rel=1e-12)


def test_wronskian_preconditions():
    curve = CurveSpec((T2, T3))
    with pytest.raises(PreconditionError):
        wronskian(curve, 4, 0.7)
    with pytest.raises(PreconditionError):
        wronskian(curve, 2, 0.1)


def test_det_exact():
    assert det_exact([[1, 2], [3, 4]]) == -2
    assert det_exact([[0, 1], [1, 0]]) == -1
    assert det_exact([[1, 2], [2, 4]]) == 0


@pytest.mark.parametrize(
    "phis,kw",
    [
        ((T2,), {}),
        (((0, 1), T3), {}),
        ((T2, T3), {"domain": (0.5, 1.5)}),
        ((T2, T3), {"sub_intervals": ((0.8, 1.0), (0.5, 0.7))}),
        ((T2, T3), {"sub_intervals": ((0.5, 0.8), (0.7, 1.0))}),
        ((T2, T3), {"sub_intervals": ((0.5, 0.7),)}),
    ],
)
def test_curve_spec_rejects(phis, kw):
    with pytest.raises(PreconditionError):
        CurveSpec(phis, **kw)


def test_sff_matches_formula():
    curve = CurveSpec((T2, T3), sub_intervals=TWO_ARCS)
    t = (0.6, 0.9)
    D1, D2 = build_D1_D2(curve, t)
    assert D1[0, 1] == pytest.approx(1.8) and D2[1, 0] == pytest.approx(3.6)
    c = sff_coefficients(curve, t)
    expect = D2.T @ np.linalg.solve(D1.T, np.ones(2))
    assert np.allclose(c, expect)
    with pytest.raises(PreconditionError):
        build_D1_D2(curve, (0.75, 0.9))


def test_singular_d1_raises():
    curve = CurveSpec((T2, (0, 0, 2)), sub_intervals=TWO_ARCS)
    with pytest.raises(SingularMatrixError):
        sff_coefficients(curve, (0.6, 0.9))


def test_scan_classifies_library(library):
    for name, (curve, expect) in library.items():
        rep = nondegeneracy_scan(curve, 6)
        assert rep.degenerate == expect, name
        assert rep.implication_holds, name


def test_scan_is_scale_invariant(library):
    curve, _ = library["t2-t3"]
    a = nondegeneracy_scan(curve, 5)
    b = nondegeneracy_scan(curve.scaled([1e-6, 1e6]), 5)
    assert a.min_abs_wronskian == pytest.approx(b.min_abs_wronskian, rel=1e-9)
    assert a.min_abs_detD1 == pytest.approx(b.min_abs_detD1, rel=1e-9)


def test_scan_grid_minimum():
    with pytest.raises(PreconditionError):
        nondegeneracy_scan(CurveSpec((T2, T3), sub_intervals=TWO_ARCS), 3)


@pytest.mark.parametrize("name", ["t2-t3", "t2-t3-t4", "trunc-t3/2-t1/2"])
def test_quadratic_fit_converges(library, name):
    curve, _ = library[name]
    t = [(lo + hi) / 2 for lo, hi in curve.sub_intervals]
    coarse = quadratic_fit_check(curve, t, 1e-3)
    fine = quadratic_fit_check(curve, t, 1e-4)
    assert max(fine.central_rel_error) < 1e-6
    # the one-sided quotient has an O(h) error
    for a, b in zip(coarse.one_sided_error, fine.one_sided_error):
        assert 5 < a / b < 20
    # the mixed differences vanish in the limit, also at rate O(h)
    assert all(abs(x) < 10 * fine.h for x in fine.off_diagonal)
    assert abs(fine.base_value) < 1e-12


def test_quadratic_fit_step_must_stay_inside():
    curve = CurveSpec((T2, T3), sub_intervals=TWO_ARCS)
    with pytest.raises(PreconditionError):
        quadratic_fit_check(curve, (0.5, 0.9), 1e-3)


def test_split_domain_and_profile():
    parts = split_domain((0.5, 1.0), 2, 0.1)
    assert parts[0] == pytest.approx((0.5, 0.7)) and parts[1] == pytest.approx((0.8, 1.0))
    with pytest.raises(PreconditionError):
        split_domain((0.5, 1.0), 2, 0.6)
    prof = separation_profile(CurveSpec((T2, T3)), [0.2, 0.05, 0.01], grid_per_axis=4)
    dets = [p["min_abs_detD1"] for p in prof]
    assert dets == sorted(dets, reverse=True)


def test_dependent_pair_wronskian_vanishes():
    curve = CurveSpec((T2, T2))
    assert all(wronskian_exact(curve, 2, Fraction(k, 10)) == 0 for k in range(5, 11))


def test_d1_d2_closed_forms():
    curve = CurveSpec((T2, T3), (0.0, 1.0), ((0.2, 0.3), (0.7, 0.8)))
    a, b = 0.25, 0.75
    D1, D2 = build_D1_D2(curve, (a, b))
    assert np.allclose(D1, [[2 * a, 2 * b], [3 * a * a, 3 * b * b]])
    assert np.linalg.det(D1) == pytest.approx(6 * a * b * (b - a))
    assert np.allclose(D2, [[2, 2], [6 * a, 6 * b]])
    c = sff_coefficients(curve, (a, b))
    assert np.all(np.abs(c) > 1e-3)
    with pytest.raises(PreconditionError):
        build_D1_D2(curve, (0.25, 0.25))


def test_t2_t7_nondegenerate():
    curve = CurveSpec((T2, (0,) * 7 + (1,)), sub_intervals=TWO_ARCS)
    assert not nondegeneracy_scan(curve, 6).degenerate
