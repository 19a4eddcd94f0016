import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvtlab.counter import (
    CounterConfig,
    brute_oracle,
    cache_load,
    cache_store,
    count,
    count_bilinear,
    count_exact,
    count_windowed,
    diagonal_lower_bound,
    grouped_oracle,
    side_table,
)
from mvtlab.counter.cache import MAGIC
from mvtlab.counter.engine import multiset_count
from mvtlab.errors import CapacityError, PreconditionError
from mvtlab.presets import bilinear_intervals, get_preset
from mvtlab.systems import Interval, SlotGroup, WindowedForm, WindowSystem

from randsys import random_system, systems


def exact_system(N, s, forms, iv=None):
    return WindowSystem.symmetric(N, iv or Interval.dyadic(N), s, forms)


# --- pinned values ---------------------------------------------------------------


def test_s1_identity():
    assert count_exact(exact_system(16, 1, (1, 2))).count == 8


@pytest.mark.parametrize("N,R", [(8, 4), (16, 8), (32, 16)])
def test_s2_closed_form(N, R):
    sys_ = exact_system(N, 2, (1, 2))
    assert count_exact(sys_).count == 2 * R * R - R
    if R**4 <= 10**6:
        assert brute_oracle(sys_).count == 2 * R * R - R


def test_s5_squares_fourth_powers_pinned():
    sys_ = exact_system(16, 5, (2, 4))
    # pinned by brute force over all 8^10 ordered tuple pairs
    assert count_exact(sys_).count == 2039808
    assert grouped_oracle(sys_).count == 2039808


def test_n8_at_32_matches_oracle():
    sys_ = get_preset("n8").system(32, get_preset("n8").rules({"delta": -1}))
    assert count_windowed(sys_).count == grouped_oracle(sys_).count == 2839472


def test_infinite_window_reduces_to_exact():
    N = 16
    exact = exact_system(N, 3, (1, 2))
    wide = WindowSystem.symmetric(N, Interval.dyadic(N), 3, (1, 2), [WindowedForm(Fraction(3, 2), math.inf, True)])
    assert count_windowed(wide).count == count_exact(exact).count == brute_oracle(exact).count


def test_n10_exceeds_diagonal():
    P = get_preset("n10")
    sys_ = P.system(24, P.rules())
    res = count(sys_)
    diag = diagonal_lower_bound(sys_)
    assert res.count >= diag > 0
    assert res.count <= 12**10


# --- oracle agreement ----------------------------------------------------------------


@pytest.mark.parametrize("sys_", systems(11, 8, max_pairs=10**6), ids=lambda s: f"s{s.s}")
def test_random_windowed_match_brute(sys_):
    assert count(sys_).count == brute_oracle(sys_).count


@pytest.mark.parametrize("sys_", systems(12, 4, max_pairs=10**6, windowed=False), ids=lambda s: f"s{s.s}")
def test_random_exact_match_brute(sys_):
    assert count(sys_).count == brute_oracle(sys_).count


@pytest.mark.parametrize("sys_", systems(13, 6, max_pairs=10**6, split=True), ids=lambda s: f"groups{len(s.groups)}")
def test_random_multigroup_match_brute(sys_):
    assert count(sys_).count == brute_oracle(sys_).count


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_property_engine_equals_oracle(seed):
    sys_ = random_system(np.random.default_rng(seed), max_pairs=2 * 10**5)
    assert count(sys_).count == brute_oracle(sys_).count


# --- invariants ------------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_window_monotone_and_bounded(seed):
    rng = np.random.default_rng(seed)
    sys_ = random_system(rng, max_pairs=10**6)
    base = [f.tolerance for f in sys_.windowed_forms]
    counts = [count(sys_.with_tolerances(*[t * f for t in base])).count for f in (0.25, 1.0, 4.0)]
    assert counts == sorted(counts)
    R = sys_.range_size
    assert diagonal_lower_bound(sys_) <= counts[0] <= R ** (2 * sys_.s)


def test_zero_window_generic_range_is_diagonal():
    N = 40
    sys_ = WindowSystem.symmetric(N, Interval(21, 40), 3, (1,), [WindowedForm(Fraction(3, 2), 0.0, True)])
    assert count(sys_).count == diagonal_lower_bound(sys_) == brute_oracle(sys_).count


def test_group_order_is_irrelevant():
    a, b = Interval(9, 11), Interval(14, 16)
    g1 = [SlotGroup(a, 1, "left"), SlotGroup(b, 2, "left"), SlotGroup(a, 2, "right"), SlotGroup(b, 1, "right")]
    forms = [WindowedForm(Fraction(1, 2), 0.01, True)]
    one = WindowSystem(g1, (1,), forms, 16)
    two = WindowSystem(list(reversed(g1)), (1,), forms, 16)
    assert count(one).count == count(two).count == brute_oracle(one).count


def test_record_weights_are_multinomial():
    sys_ = get_preset("n8").system(16, get_preset("n8").rules())
    table, _ = side_table(sys_, "left")
    assert len(table) == multiset_count(8, 4)
    assert int(table.weight.sum()) == 8**4
    rec = table.record(0)
    assert rec.weight >= 1 and len(rec.exact_key) == 2 and len(rec.window_values) == 1


@pytest.mark.parametrize("workers", [2, 4, 8])
def test_thread_count_does_not_change_counts(workers):
    P = get_preset("n10")
    sys_ = P.system(32, P.rules({"delta": -1.5}))
    assert count(sys_, CounterConfig(workers=workers)).count == count(sys_).count


# --- bilinear -----------------------------------------------------------------------


def test_bilinear_matches_oracle():
    sys_ = get_preset("bilinear-n3").system(32, {})
    res = count_bilinear(sys_)
    assert res.count == brute_oracle(sys_).count
    assert res.stats["separation"] > 0


def test_bilinear_rejects_overlap():
    u1, _ = bilinear_intervals(32)
    groups = [SlotGroup(u1, 2, side) for side in ("left", "right")]
    sys_ = WindowSystem(groups, (1, 2), [WindowedForm(Fraction(3, 2), 1 / 32, True)], 32)
    with pytest.raises(PreconditionError):
        count_bilinear(sys_)


# --- preconditions, capacity -----------------------------------------------------------


def test_count_exact_preconditions():
    with pytest.raises(PreconditionError):
        count_exact(get_preset("n8").system(16, get_preset("n8").rules()))
    with pytest.raises(PreconditionError):
        count_windowed(exact_system(16, 2, (1, 2)))


def test_nonpositive_range_rejected():
    with pytest.raises(PreconditionError):
        count(WindowSystem.symmetric(8, Interval(0, 4), 2, (1, 2)))


def test_capacity_error_reports_budget():
    P = get_preset("n10")
    with pytest.raises(CapacityError) as info:
        count(P.system(256, P.rules()), CounterConfig(memory_budget=1 << 20))
    assert info.value.budget == 1 << 20 and info.value.estimate > 1 << 20
    assert "budget" in str(info.value)


def test_meet_in_middle_fallback_agrees():
    sys_ = exact_system(40, 4, (1, 3))
    direct = count_exact(sys_)
    split = count_exact(sys_, CounterConfig(memory_budget=200_000))
    assert split.stats["mode"] == "meet_in_middle"
    assert direct.count == split.count


def test_brute_ceiling():
    with pytest.raises(CapacityError):
        brute_oracle(exact_system(64, 5, (1, 2)))


# --- cache ----------------------------------------------------------------------------


def test_cache_round_trip_and_hit(tmp_path):
    P = get_preset("n8")
    sys_ = P.system(128, P.rules())
    cfg = CounterConfig(cache_dir=str(tmp_path))
    first = count(sys_, cfg)
    second = count(sys_, cfg)
    assert second.count == first.count == count(sys_).count
    assert second.cache_hit and not first.cache_hit
    assert second.enumerated_multisets == 0 < first.enumerated_multisets
    assert second.wall_time < first.wall_time


def test_cache_store_load(tmp_path):
    fp = bytes(range(32))
    ex = np.array([[1, -2, 3]], np.int64)
    win = np.array([[5, -7, 1 << 60], [0, 1, 2]], np.int64)
    w = np.array([1, 2, 24], np.int64)
    path = tmp_path / "t.mvt"
    cache_store(path, fp, ex, win, w)
    assert path.read_bytes()[:4] == MAGIC
    got = cache_load(path, fp, 1, 2)
    assert all(np.array_equal(a, b) for a, b in zip(got, (ex, win, w)))
    assert cache_load(path, bytes(32), 1, 2) is None


def test_cache_refuses_corrupt_or_foreign(tmp_path):
    fp = bytes(32)
    path = tmp_path / "x.mvt"
    cache_store(path, fp, np.zeros((1, 2), np.int64), np.zeros((0, 2), np.int64), np.ones(2, np.int64))
    data = bytearray(path.read_bytes())
    data[4] = 99  # version
    path.write_bytes(bytes(data))
    assert cache_load(path, fp, 1, 0) is None
    path.write_bytes(b"MVT")
    assert cache_load(path, fp, 1, 0) is None
    assert cache_load(tmp_path / "missing.mvt", fp, 1, 0) is None


def test_cache_recomputes_after_corruption(tmp_path):
    P = get_preset("i6")
    sys_ = P.system(64, P.rules())
    cfg = CounterConfig(cache_dir=str(tmp_path))
    expected = count(sys_, cfg).count
    (f,) = list(tmp_path.iterdir())
    f.write_bytes(f.read_bytes()[:-5])
    again = count(sys_, cfg)
    assert again.count == expected and not again.cache_hit


def test_cache_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("MVTLAB_CACHE_DIR", str(tmp_path))
    P = get_preset("i6")
    count(P.system(64, P.rules()))
    assert any(p.suffix == ".mvt" for p in tmp_path.iterdir())
