"""Compiled inner loops. All kernels release the GIL and touch only their own output slices."""

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def enumerate_multisets(R, m, first_lo, first_hi, ex_tab, win_tab, fact, out_ex, out_win, out_w, start):
    """Write every nondecreasing m-tuple of indices in [0, R) whose first index lies in
    [first_lo, first_hi), together with its power sums and multinomial weight."""
    F = ex_tab.shape[0]
    W = win_tab.shape[0]
    idx = np.empty(m, np.int64)
    pos = start
    for first in range(first_lo, first_hi):
        for t in range(m):
            idx[t] = first
        while True:
            for f in range(F):
                acc = 0
                for t in range(m):
                    acc += ex_tab[f, idx[t]]
                out_ex[f, pos] = acc
            for f in range(W):
                acc = 0
                for t in range(m):
                    acc += win_tab[f, idx[t]]
                out_win[f, pos] = acc
            w = fact[m]
            run = 1
            for t in range(1, m):
                if idx[t] == idx[t - 1]:
                    run += 1
                else:
                    w //= fact[run]
                    run = 1
            w //= fact[run]
            out_w[pos] = w
            pos += 1
            t = m - 1
            while t >= 1 and idx[t] == R - 1:
                t -= 1
            if t < 1:
                break
            v = idx[t] + 1
            for u in range(t, m):
                idx[u] = v
    return pos


@njit(nogil=True, cache=True)
def sweep_pairs(gL, v1L, v2L, wL, a, b, gR, v1R, v2R, wR, prefR, T1, T2, mode):
    """Sum of wL[i] * wR[j] over i in [a, b) and all j with gR[j] == gL[i] and, depending
    on mode, |v1R[j] - v1L[i]| <= T1 (mode >= 1) and |v2R[j] - v2L[i]| <= T2 (mode 2).

    Both sides must be sorted by (g, v1). Returns the total as (high, low) 64-bit words.
    """
    hi = np.uint64(0)
    lo = np.uint64(0)
    one = np.uint64(1)
    i = a
    while i < b:
        g = gL[i]
        e = i
        while e < b and gL[e] == g:
            e += 1
        rs = np.searchsorted(gR, g, side="left")
        re = np.searchsorted(gR, g, side="right")
        if rs < re:
            plo = rs
            phi = rs
            for k in range(i, e):
                if mode == 0:
                    S = prefR[re] - prefR[rs]
                else:
                    x = v1L[k]
                    while plo < re and v1R[plo] < x - T1:
                        plo += 1
                    if phi < plo:
                        phi = plo
                    while phi < re and v1R[phi] <= x + T1:
                        phi += 1
                    if mode == 1:
                        S = prefR[phi] - prefR[plo]
                    else:
                        S = 0
                        y = v2L[k]
                        for j in range(plo, phi):
                            d = v2R[j] - y
                            if d <= T2 and -d <= T2:
                                S += wR[j]
                c = np.uint64(wL[k] * S)
                nlo = lo + c
                if nlo < lo:
                    hi += one
                lo = nlo
        i = e
    return hi, lo
