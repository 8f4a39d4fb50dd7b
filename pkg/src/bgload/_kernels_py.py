"""Pure-Python kernels; the fallback when the compiled module is unavailable.

Every function here has a twin in ``_ckernels.pyx`` that performs the same
floating point operations in the same order, so both backends agree bit
for bit.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

SQD, MAPE, TADJ_SQD = 0, 1, 2


def maxmin_share(capacity, demands):
    """Max-min fair split of ``capacity``; each consumer is capped at its demand.

    ``inf`` demands are uncapped. Returns allocations in input order.
    """
    n = len(demands)
    alloc = [0.0] * n
    if n == 0:
        return alloc
    order = sorted(range(n), key=demands.__getitem__)
    remaining = capacity
    left = n
    for pos in range(n):
        i = order[pos]
        share = remaining / left
        d = demands[i]
        if d <= share:
            alloc[i] = d
            remaining -= d
            left -= 1
        else:
            for j in order[pos:]:
                alloc[j] = share
            break
    return alloc


def error_at(fn, r_ex, r_ob, start, k):
    """Error of the ``k`` pairs beginning at offset ``start``, re-indexed from 1."""
    total = 0.0
    if fn == SQD:
        for i in range(k):
            d = r_ex[start + i] - r_ob[start + i]
            total += d * d
        return math.sqrt(total / k)
    if fn == MAPE:
        for i in range(k):
            ex = r_ex[start + i]
            total += abs(ex - r_ob[start + i]) / ex
        return (100.0 / k) * total
    weights = 0.0
    for i in range(k):
        d = r_ex[start + i] - r_ob[start + i]
        w = (i + 1) / k
        total += w * d * d
        weights += w
    return math.sqrt(total / weights)


def batch_errors(fn, r_ex, r_ob, ks):
    """Past and future errors of many runs at many checkpoints.

    ``r_ob`` is (runs x N); ``ks`` holds flat job counts. Future entries for
    ``k == N`` are NaN.
    """
    r_ex = np.asarray(r_ex, dtype=np.float64).tolist()
    obs = np.asarray(r_ob, dtype=np.float64)
    n = len(r_ex)
    ks = [int(k) for k in ks]
    past = np.empty((obs.shape[0], len(ks)))
    future = np.full((obs.shape[0], len(ks)), np.nan)
    for row in range(obs.shape[0]):
        ob = obs[row].tolist()
        for c, k in enumerate(ks):
            past[row, c] = error_at(fn, r_ex, ob, 0, k)
            if k < n:
                future[row, c] = error_at(fn, r_ex, ob, k, n - k)
    return past, future


def floor_index(ts, q):
    i = bisect.bisect_right(ts, q) - 1
    return 0 if i < 0 else i


def phi_batch(xs, members, eprime, ts, past, t_init, half_window):
    """Alignment cost for each candidate offset in ``xs``.

    ``ts`` is the sorted fragment index and ``past`` the cached past error of
    each fragment; lookups at shifted timestamps use floor semantics.
    """
    ts = list(ts)
    past = list(past)
    out = []
    for x in xs:
        total = 0.0
        for t, e in zip(members, eprime):
            q = x + t - t_init + half_window
            total += abs(e - past[floor_index(ts, q)])
        out.append(total)
    return out
