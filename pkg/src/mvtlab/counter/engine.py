"""Exact and windowed solution counting.

Both engines count ordered tuple pairs. The windowed engine enumerates
s-multisets per side with multinomial weights, groups them by the values of
the exact forms and sweeps each group in order of the first window value.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import CapacityError, PreconditionError
from ..systems import (
    DEFAULT_SCALE_BITS,
    FixedPoint,
    WindowSystem,
    fixed_power,
    fixed_tolerance,
    window_scale,
)
from . import _kernels
from .cache import cache_load, cache_path, cache_store, resolve_cache_dir

log = logging.getLogger(__name__)

_INT64_SAFE = 1 << 62
GiB = 1 << 30


@dataclass
class CounterConfig:
    scale_bits: int = DEFAULT_SCALE_BITS
    workers: int = 1
    memory_budget: int = 8 * GiB
    cache_dir: str | None = None


@dataclass(frozen=True)
class TupleRecord:
    exact_key: tuple
    window_values: tuple
    weight: int


@dataclass
class RecordTable:
    """Multiset records for one side, sorted by (exact key, first window value)."""

    exact: np.ndarray
    window: np.ndarray
    weight: np.ndarray
    scales: tuple = ()

    def __len__(self):
        return self.weight.shape[0]

    def record(self, i: int) -> TupleRecord:
        return TupleRecord(
            tuple(int(x) for x in self.exact[:, i]),
            tuple(FixedPoint(int(v), k) for v, k in zip(self.window[:, i], self.scales)),
            int(self.weight[i]),
        )

    def diagonal(self) -> int:
        """Sum of squared weights: the ordered pairs that are permutations of each other."""
        w = self.weight.astype(object)
        return int(np.sum(w * w)) if len(self) else 0


@dataclass
class CountResult:
    count: int
    system: WindowSystem
    enumerated_multisets: int
    wall_time: float
    engine: str
    cache_hit: bool = False
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "engine": self.engine,
            "enumerated_multisets": self.enumerated_multisets,
            "cache_hit": self.cache_hit,
            "system": self.system.to_dict(),
        }


def _config(config):
    return config if config is not None else CounterConfig()


def _check_positive_ranges(system: WindowSystem):
    for g in system.groups:
        if g.interval.lo < 1:
            raise PreconditionError(f"counting ranges must be positive, got {g.interval}")


def _max_n(system: WindowSystem) -> int:
    return max(g.interval.hi for g in system.groups)


def _exact_table(system: WindowSystem, values: np.ndarray) -> np.ndarray:
    s, top = system.s, _max_n(system)
    for k in system.exact_forms:
        if s * top ** k >= _INT64_SAFE:
            raise CapacityError(f"exact sums of n^{k} up to n={top} overflow 64 bits")
    tab = np.empty((len(system.exact_forms), values.size), np.int64)
    for f, k in enumerate(system.exact_forms):
        tab[f] = [int(v) ** k for v in values]
    return tab


def window_scales(system: WindowSystem, scale_bits: int) -> tuple:
    top = _max_n(system)
    return tuple(window_scale(f, system.s, system.N, top, scale_bits) for f in system.windowed_forms)


def _window_table(system: WindowSystem, values: np.ndarray, scales) -> np.ndarray:
    tab = np.empty((len(system.windowed_forms), values.size), np.int64)
    for f, (form, k) in enumerate(zip(system.windowed_forms, scales)):
        N = system.N if form.normalized else None
        tab[f] = [fixed_power(int(v), form.power, N, k) for v in values]
    return tab


def multiset_count(R: int, m: int) -> int:
    return math.comb(R + m - 1, m)


def _side_size(system: WindowSystem, side: str) -> int:
    return math.prod(multiset_count(g.interval.size, g.multiplicity) for g in system.side(side))


def _enumerate_group(interval, m, system, scales, workers):
    values = np.arange(interval.lo, interval.hi + 1, dtype=np.int64)
    R = values.size
    ex_tab = _exact_table(system, values)
    win_tab = _window_table(system, values, scales)
    fact = np.array([math.factorial(i) for i in range(m + 1)], np.int64)
    total = multiset_count(R, m)
    out_ex = np.empty((ex_tab.shape[0], total), np.int64)
    out_win = np.empty((win_tab.shape[0], total), np.int64)
    out_w = np.empty(total, np.int64)
    # offsets by leading element make the layout independent of the worker count
    per_first = [math.comb(R - f + m - 2, m - 1) for f in range(R)]
    offsets = np.concatenate([[0], np.cumsum(per_first)]).astype(np.int64)
    n_chunks = min(R, max(1, workers * 4)) if workers > 1 else 1
    bounds = _balanced_bounds(per_first, n_chunks)

    def job(lo_hi):
        lo, hi = lo_hi
        return _kernels.enumerate_multisets(
            R, m, lo, hi, ex_tab, win_tab, fact, out_ex, out_win, out_w, int(offsets[lo])
        )

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(job, bounds))
    else:
        for b in bounds:
            job(b)
    return out_ex, out_win, out_w


def _balanced_bounds(sizes, n_chunks):
    """Split range(len(sizes)) into consecutive pieces of roughly equal total size."""
    total = sum(sizes)
    bounds, start, acc = [], 0, 0
    target = total / n_chunks
    for i, sz in enumerate(sizes):
        acc += sz
        if acc >= target * (len(bounds) + 1) and i + 1 < len(sizes):
            bounds.append((start, i + 1))
            start = i + 1
    bounds.append((start, len(sizes)))
    return [b for b in bounds if b[0] < b[1]]


def _build_side(system, side, scales, workers):
    ex = win = w = None
    for g in system.side(side):
        gex, gwin, gw = _enumerate_group(g.interval, g.multiplicity, system, scales, workers)
        if w is None:
            ex, win, w = gex, gwin, gw
        else:
            n = w.size * gw.size
            ex = (ex[:, :, None] + gex[:, None, :]).reshape(ex.shape[0], n)
            win = (win[:, :, None] + gwin[:, None, :]).reshape(win.shape[0], n)
            w = (w[:, None] * gw[None, :]).reshape(n)
    return ex, win, w


def _bytes_per_record(system):
    # raw table, sorted copy, key, sort permutation, prefix sums
    cols = len(system.exact_forms) + len(system.windowed_forms) + 1
    return 8 * (2 * cols + 4)


def preflight(system: WindowSystem, config: CounterConfig) -> int:
    """Projected peak bytes for the grouped sweep; raises CapacityError above budget."""
    sides = ("left",) if system.symmetric_sides else ("left", "right")
    records = sum(_side_size(system, s) for s in sides)
    est = records * _bytes_per_record(system)
    if est > config.memory_budget:
        raise CapacityError(
            f"projected {records:,} multiset records need ~{est / GiB:.2f} GiB, "
            f"above the memory budget of {config.memory_budget / GiB:.2f} GiB; "
            "lower N or s, or raise the budget",
            estimate=est,
            budget=config.memory_budget,
        )
    return est


def _exact_bounds(system):
    lo, hi = [], []
    for k in system.exact_forms:
        side_lo, side_hi = [], []
        for side in ("left", "right"):
            gs = system.side(side)
            side_lo.append(sum(g.multiplicity * g.interval.lo ** k for g in gs))
            side_hi.append(sum(g.multiplicity * g.interval.hi ** k for g in gs))
        lo.append(min(side_lo))
        hi.append(max(side_hi))
    return lo, hi


def _group_keys(system, tables):
    """A sortable int64 key per record, equal iff the exact-form sums agree."""
    if not system.exact_forms:
        return [np.zeros(len(t), np.int64) for t in tables]
    lo, hi = _exact_bounds(system)
    radix = [h - l + 1 for l, h in zip(lo, hi)]
    if math.prod(radix) < _INT64_SAFE:
        keys = []
        for t in tables:
            key = np.zeros(len(t), np.int64)
            for f in range(len(radix)):
                key = key * radix[f] + (t.exact[f] - lo[f])
            keys.append(key)
        return keys
    stacked = np.concatenate([t.exact for t in tables], axis=1)
    _, inverse = np.unique(stacked, axis=1, return_inverse=True)
    inverse = inverse.reshape(-1).astype(np.int64)
    out, start = [], 0
    for t in tables:
        out.append(inverse[start : start + len(t)])
        start += len(t)
    return out


def _sort_table(ex, win, w, scales, system):
    tmp = RecordTable(ex, win, w, scales)
    key = _group_keys(system, [tmp])[0]
    v1 = win[0] if win.shape[0] else np.zeros_like(w)
    order = np.lexsort((v1, key))
    return RecordTable(ex[:, order], win[:, order], w[order], scales)


def side_table(system: WindowSystem, side: str, config: CounterConfig | None = None):
    """Sorted record table for one side, served from the cache when possible.

    Returns (table, cache_hit).
    """
    cfg = _config(config)
    _check_positive_ranges(system)
    scales = window_scales(system, cfg.scale_bits)
    cache_dir = resolve_cache_dir(cfg.cache_dir)
    fp = path = None
    if cache_dir is not None:
        fp = system.fingerprint(cfg.scale_bits, extra=f"side={side}")
        path = cache_path(cache_dir, fp)
        hit = cache_load(path, fp, len(system.exact_forms), len(system.windowed_forms))
        if hit is not None:
            return RecordTable(*hit, scales), True
    ex, win, w = _build_side(system, side, scales, cfg.workers)
    table = _sort_table(ex, win, w, scales, system)
    if path is not None:
        cache_store(path, fp, table.exact, table.window, table.weight)
    return table, False


def _sweep(system, left, right, cfg):
    keyL, keyR = _group_keys(system, [left, right])
    W = len(system.windowed_forms)
    zeros = lambda t: np.zeros(len(t), np.int64)
    v1L = left.window[0] if W >= 1 else zeros(left)
    v1R = right.window[0] if W >= 1 else zeros(right)
    v2L = left.window[1] if W >= 2 else zeros(left)
    v2R = right.window[1] if W >= 2 else zeros(right)
    T = [fixed_tolerance(f.tolerance, k) for f, k in zip(system.windowed_forms, left.scales)] + [0, 0]
    if len(left) == 0 or len(right) == 0:
        return 0
    wsum_R = int(right.weight.astype(object).sum())
    if int(left.weight.max()) * wsum_R >= 1 << 63:
        raise CapacityError("per-record pair counts overflow 64 bits; reduce the ladder size")
    prefR = np.concatenate([[0], np.cumsum(right.weight)]).astype(np.int64)

    n = len(left)
    n_chunks = max(1, cfg.workers * 4) if cfg.workers > 1 else 1
    cuts = [0]
    for c in range(1, n_chunks):
        p = (n * c) // n_chunks
        if p <= cuts[-1]:
            continue
        p = int(np.searchsorted(keyL, keyL[p - 1], side="right"))
        if cuts[-1] < p < n:
            cuts.append(p)
    cuts.append(n)

    def job(ab):
        a, b = ab
        hi, lo = _kernels.sweep_pairs(
            keyL, v1L, v2L, left.weight, a, b, keyR, v1R, v2R, right.weight, prefR, T[0], T[1], W
        )
        return (int(hi) << 64) | int(lo)

    spans = list(zip(cuts[:-1], cuts[1:]))
    if cfg.workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return sum(pool.map(job, spans))
    return sum(job(ab) for ab in spans)


def _group_sweep(system: WindowSystem, cfg: CounterConfig, engine: str) -> CountResult:
    t0 = time.perf_counter()
    preflight(system, cfg)
    left, hitL = side_table(system, "left", cfg)
    if system.symmetric_sides:
        right, hitR = left, hitL
    else:
        right, hitR = side_table(system, "right", cfg)
    count = _sweep(system, left, right, cfg)
    enumerated = (0 if hitL else len(left)) + (0 if (hitR or right is left) else len(right))
    return CountResult(
        count=count,
        system=system,
        enumerated_multisets=enumerated,
        wall_time=time.perf_counter() - t0,
        engine=engine,
        cache_hit=hitL and hitR,
        stats={"records_left": len(left), "records_right": len(right)},
    )


def count_windowed(system: WindowSystem, config: CounterConfig | None = None) -> CountResult:
    """Exact count of a system with one or two windowed forms."""
    n = len(system.windowed_forms)
    if not 1 <= n <= 2:
        raise PreconditionError(f"count_windowed handles one or two windowed forms, got {n}")
    return _group_sweep(system, _config(config), "group_sweep")


def separation_check(system: WindowSystem) -> int:
    """Smallest gap between the two slot groups of a bilinear (n=3) system."""
    gaps = []
    for side in ("left", "right"):
        gs = system.side(side)
        if len(gs) != 2 or any(g.multiplicity != 2 for g in gs):
            raise PreconditionError(
                f"bilinear count needs two slot groups of multiplicity 2 on the {side} side"
            )
        gaps.append(gs[0].interval.gap(gs[1].interval))
    if min(gaps) < 0:
        raise PreconditionError("slot groups overlap; the separation hypothesis fails")
    return min(gaps)


def count_bilinear(system: WindowSystem, config: CounterConfig | None = None) -> CountResult:
    """Mixed count for the n=3 bilinear mean value: 2+2 slots from U1, U2 on each side."""
    gap = separation_check(system)
    res = _group_sweep(system, _config(config), "group_sweep")
    res.stats["separation"] = gap
    return res


# --- pure exact systems: representation functions by convolution -------------


def _exact_radix(system):
    s = system.s
    hi = _max_n(system)
    radix = [s * hi ** k + 1 for k in system.exact_forms]
    if math.prod(radix) >= _INT64_SAFE:
        raise CapacityError("exact-form key space exceeds 64 bits")
    strides, acc = [], 1
    for r in reversed(radix):
        strides.append(acc)
        acc *= r
    return list(reversed(strides))


def _element_keys(system, values):
    strides = _exact_radix(system)
    keys = np.zeros(values.size, np.int64)
    for k, st in zip(system.exact_forms, strides):
        keys += np.array([int(v) ** k for v in values], np.int64) * st
    return keys


def _reduce(keys, counts):
    order = np.argsort(keys, kind="stable")
    keys, counts = keys[order], counts[order]
    if keys.size == 0:
        return keys, counts
    starts = np.flatnonzero(np.concatenate([[True], keys[1:] != keys[:-1]]))
    return keys[starts], np.add.reduceat(counts, starts)


def representation(element_keys, steps, chunk_elems=1 << 22):
    """r_steps(v): number of ordered tuples of given length with key-sum v, as (keys, counts)."""
    keys = np.zeros(1, np.int64)
    counts = np.ones(1, np.int64)
    for _ in range(steps):
        per = max(1, chunk_elems // max(1, keys.size))
        parts_k, parts_c = [], []
        for a in range(0, element_keys.size, per):
            e = element_keys[a : a + per]
            parts_k.append((keys[:, None] + e[None, :]).ravel())
            parts_c.append(np.repeat(counts, e.size))
            if len(parts_k) > 4:
                k2, c2 = _reduce(np.concatenate(parts_k), np.concatenate(parts_c))
                parts_k, parts_c = [k2], [c2]
        keys, counts = _reduce(np.concatenate(parts_k), np.concatenate(parts_c))
    return keys, counts


def _sum_squares(counts, bound):
    if bound < 1 << 63:
        return int(np.sum(counts * counts))
    c = counts.astype(object)
    return int(np.sum(c * c))


def projected_keys(system: WindowSystem) -> int:
    s = system.s
    g = system.side("left")[0]
    ranges = math.prod(s * (g.interval.hi ** k - g.interval.lo ** k) + 1 for k in system.exact_forms)
    return min(g.interval.size ** s, ranges)


def _mitm_sum_squares(element_keys, s, pair_budget):
    """sum_v r_s(v)^2 with r_s = r_a * r_b streamed over buckets of the key range."""
    a = s // 2
    ka, ca = representation(element_keys, a)
    kb, cb = representation(element_keys, s - a)
    top = int(ka[-1] + kb[-1]) + 1
    n_buckets = max(1, -(-ka.size * kb.size // max(1, pair_budget)))
    edges = np.linspace(0, top, n_buckets + 1).astype(np.int64)
    edges[-1] = top
    total = 0
    for v0, v1 in zip(edges[:-1], edges[1:]):
        if v1 <= v0:
            continue
        lo = np.searchsorted(kb, v0 - ka, side="left")
        hi = np.searchsorted(kb, v1 - ka, side="left")
        lens = hi - lo
        n = int(lens.sum())
        if n == 0:
            continue
        src = np.repeat(np.arange(ka.size), lens)
        offs = np.arange(n) - np.repeat(np.cumsum(lens) - lens, lens)
        idx = np.repeat(lo, lens) + offs
        keys, counts = _reduce(ka[src] + kb[idx], ca[src] * cb[idx])
        total += _sum_squares(counts, 1 << 64)
    return total


def count_exact(system: WindowSystem, config: CounterConfig | None = None) -> CountResult:
    """sum_v r_s(v)^2 for a system of exact power-sum equations."""
    cfg = _config(config)
    if system.windowed_forms:
        raise PreconditionError("count_exact needs a system without windowed forms")
    gl, gr = system.side("left"), system.side("right")
    if len(gl) != 1 or len(gr) != 1 or gl[0].interval != gr[0].interval:
        raise PreconditionError("count_exact needs one slot group per side over the same interval")
    _check_positive_ranges(system)
    t0 = time.perf_counter()
    interval, s = gl[0].interval, system.s
    values = np.arange(interval.lo, interval.hi + 1, dtype=np.int64)
    ekeys = _element_keys(system, values)
    est = projected_keys(system)
    bound = interval.size ** (2 * s)
    # keys + counts, sort permutation and an expansion chunk
    need = est * 16 * 4
    if need <= cfg.memory_budget:
        _, counts = representation(ekeys, s)
        total = _sum_squares(counts, bound)
        engine_note = "direct"
    else:
        pair_budget = max(1, cfg.memory_budget // 64)
        half = min(interval.size ** (s - s // 2), est)
        if half * 16 * 4 > cfg.memory_budget:
            raise CapacityError(
                f"projected {est:,} distinct keys (~{need / GiB:.2f} GiB) exceed the budget "
                f"{cfg.memory_budget / GiB:.2f} GiB even after a meet-in-the-middle split",
                estimate=need,
                budget=cfg.memory_budget,
            )
        log.info("key space %d over budget; meet-in-the-middle split (half size %d)", est, half)
        total = _mitm_sum_squares(ekeys, s, pair_budget)
        engine_note = "meet_in_middle"
    return CountResult(
        count=total,
        system=system,
        enumerated_multisets=0,
        wall_time=time.perf_counter() - t0,
        engine="convolution",
        stats={"projected_keys": est, "mode": engine_note},
    )


def count(system: WindowSystem, config: CounterConfig | None = None) -> CountResult:
    """Dispatch to the convolution engine for pure exact systems, else the group sweep."""
    cfg = _config(config)
    if not system.windowed_forms:
        gl, gr = system.side("left"), system.side("right")
        if len(gl) == 1 and len(gr) == 1 and gl[0].interval == gr[0].interval:
            return count_exact(system, cfg)
        return _group_sweep(system, cfg, "group_sweep")
    return count_windowed(system, cfg)


def diagonal_lower_bound(system: WindowSystem, config: CounterConfig | None = None) -> int:
    """sum of squared multiset weights (valid when both sides have the same structure)."""
    if not system.symmetric_sides:
        raise PreconditionError("the diagonal bound needs identical left and right structure")
    table, _ = side_table(system, "left", config)
    return table.diagonal()
