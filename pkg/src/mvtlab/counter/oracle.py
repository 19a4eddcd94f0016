"""Independent verification oracles.

Both work on ordered tuples (no multiset compression) and evaluate windowed
forms in float64 rather than fixed point, so they share no arithmetic with the
optimized engines beyond the system description itself.
"""

from __future__ import annotations

import time

import numpy as np

from ..errors import CapacityError
from ..systems import WindowSystem
from .engine import CountResult

BRUTE_CEILING = 10**9


def _slot_values(system: WindowSystem, side: str):
    slots = []
    for g in system.side(side):
        slots += [np.arange(g.interval.lo, g.interval.hi + 1, dtype=np.int64)] * g.multiplicity
    return slots


def ordered_tuples(system: WindowSystem, side: str) -> np.ndarray:
    """All ordered tuples for one side, shape (count, s)."""
    slots = _slot_values(system, side)
    grids = np.meshgrid(*slots, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _tuple_values(system: WindowSystem, tuples: np.ndarray):
    exact = np.zeros((tuples.shape[0], len(system.exact_forms)), np.int64)
    for f, k in enumerate(system.exact_forms):
        exact[:, f] = (tuples.astype(object) ** k).sum(axis=1).astype(np.int64)
    window = np.zeros((tuples.shape[0], len(system.windowed_forms)))
    for f, form in enumerate(system.windowed_forms):
        x = tuples / system.N if form.normalized else tuples.astype(float)
        g = x ** float(form.power)
        # sorting makes permuted tuples sum in the same order, hence bit-identically
        window[:, f] = np.sort(g, axis=1).sum(axis=1)
    return exact, window


def _dense_keys(exact_left, exact_right):
    if exact_left.shape[1] == 0:
        return np.zeros(len(exact_left), np.int64), np.zeros(len(exact_right), np.int64)
    both = np.concatenate([exact_left, exact_right])
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv[: len(exact_left)], inv[len(exact_left) :]


def brute_oracle(system: WindowSystem, ceiling: int = BRUTE_CEILING) -> CountResult:
    """Direct comparison of every ordered left tuple with every ordered right tuple."""
    pairs = system.ordered_tuples("left") * system.ordered_tuples("right")
    if pairs > ceiling:
        raise CapacityError(f"brute force needs {pairs:,} tuple pairs, above the ceiling {ceiling:,}")
    t0 = time.perf_counter()
    L = ordered_tuples(system, "left")
    R = ordered_tuples(system, "right")
    exL, winL = _tuple_values(system, L)
    exR, winR = _tuple_values(system, R)
    kL, kR = _dense_keys(exL, exR)
    tol = np.array([f.tolerance for f in system.windowed_forms])
    block = max(1, 4_000_000 // max(1, len(R)))
    total = 0
    for a in range(0, len(L), block):
        ok = kL[a : a + block, None] == kR[None, :]
        for f in range(len(tol)):
            ok &= np.abs(winL[a : a + block, f, None] - winR[None, :, f]) <= tol[f]
        total += int(np.count_nonzero(ok))
    return CountResult(
        count=total,
        system=system,
        enumerated_multisets=0,
        wall_time=time.perf_counter() - t0,
        engine="brute",
    )


def grouped_oracle(system: WindowSystem, ceiling: int = 10**7) -> CountResult:
    """Meet-in-the-middle oracle: ordered tuples bucketed by exact key, all pairs per bucket.

    Scales to systems whose total pair count is beyond brute force but whose
    exact-key buckets stay small (e.g. the 8-variable system at N=32).
    """
    n_left, n_right = system.ordered_tuples("left"), system.ordered_tuples("right")
    if max(n_left, n_right) > ceiling:
        raise CapacityError(f"grouped oracle needs {max(n_left, n_right):,} tuples per side, above {ceiling:,}")
    t0 = time.perf_counter()
    L = ordered_tuples(system, "left")
    R = ordered_tuples(system, "right")
    exL, winL = _tuple_values(system, L)
    exR, winR = _tuple_values(system, R)
    kL, kR = _dense_keys(exL, exR)
    tol = np.array([f.tolerance for f in system.windowed_forms])
    oL, oR = np.argsort(kL, kind="stable"), np.argsort(kR, kind="stable")
    kL, winL, kR, winR = kL[oL], winL[oL], kR[oR], winR[oR]
    keys = np.intersect1d(kL, kR)
    sL, eL = np.searchsorted(kL, keys, "left"), np.searchsorted(kL, keys, "right")
    sR, eR = np.searchsorted(kR, keys, "left"), np.searchsorted(kR, keys, "right")
    total = 0
    for a, b, c, d in zip(sL, eL, sR, eR):
        if not len(tol):
            total += int(b - a) * int(d - c)
            continue
        ok = np.ones((b - a, d - c), bool)
        for f in range(len(tol)):
            ok &= np.abs(winL[a:b, f, None] - winR[None, c:d, f]) <= tol[f]
        total += int(np.count_nonzero(ok))
    return CountResult(
        count=total,
        system=system,
        enumerated_multisets=0,
        wall_time=time.perf_counter() - t0,
        engine="brute",
        stats={"mode": "grouped"},
    )

