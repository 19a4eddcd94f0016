"""Random small counting systems for oracle comparisons."""

from fractions import Fraction

import numpy as np

from mvtlab.systems import Interval, SlotGroup, WindowedForm, WindowSystem

_FRACTIONAL = [Fraction(3, 2), Fraction(1, 2), Fraction(4, 3), Fraction(5, 2)]


def random_window(rng, N):
    if rng.random() < 0.25:
        # integer power in raw units: an integer-valued window
        power = int(rng.choice([2, 3]))
        return WindowedForm(power, float(rng.integers(1, 4 * N)), False)
    power = _FRACTIONAL[int(rng.integers(len(_FRACTIONAL)))]
    return WindowedForm(power, float(10 ** rng.uniform(-4, -0.5)), True)


def random_system(rng, max_pairs=10**8, windowed=True, split=False):
    """A symmetric system with s in {2, 3} and (range size)^(2s) <= max_pairs."""
    s = int(rng.choice([2, 3]))
    r_max = int(max_pairs ** (1 / (2 * s)))
    N = int(rng.integers(8, 64))
    R = int(rng.integers(3, min(r_max, N) + 1))
    lo = int(rng.integers(1, N - R + 2))
    iv = Interval(lo, lo + R - 1)
    exact = sorted(rng.choice([1, 2, 3], size=int(rng.integers(0 if windowed else 1, 3)), replace=False).tolist())
    forms = []
    if windowed:
        used = set(exact)
        for _ in range(int(rng.integers(1, 3))):
            f = random_window(rng, N)
            if f.power in used:
                continue
            used.add(f.power)
            forms.append(f)
        if not forms:
            forms.append(WindowedForm(Fraction(3, 2), 1e-2, True))
    if split and R >= 4:
        cut = lo + R // 2
        a, b = Interval(lo, cut - 1), Interval(cut, lo + R - 1)
        groups = []
        for side in ("left", "right"):
            m = int(rng.integers(1, s))
            groups += [SlotGroup(a, m, side), SlotGroup(b, s - m, side)]
        return WindowSystem(groups, exact, forms, N)
    return WindowSystem.symmetric(N, iv, s, exact, forms)


def systems(seed, n, **kw):
    rng = np.random.default_rng(seed)
    return [random_system(rng, **kw) for _ in range(n)]
