"""Discrete-event kernels: Poisson cars, deterministic headways.

A queue serves while its light is green.  Departures are at least a headway
``d = 1/H`` apart, the first one after a green starts comes a full headway
into it, and a car reaching an idle green queue passes straight through.
A departure that would fall after the green ends waits for the next green.
"""

import numpy as np

from .._jit import jit
from .common import ARR, DEP, E, G2R, S, fill_rates
from .common import put_record as _put


def green_intervals(sw, initially_green):
    """Green windows of one queue from its intersection's switch times."""
    edges = np.concatenate(([0.0], sw))
    if initially_green:
        starts, ends = edges[0:-1:2], edges[1::2]
    else:
        starts, ends = edges[1:-1:2], edges[2::2]
    m = min(starts.size, ends.size)
    return np.ascontiguousarray(starts[:m]), np.ascontiguousarray(ends[:m])


@jit
def serve(arr, gs, ge, d):
    """Departure time of every car in ``arr`` (sorted); inf if never served."""
    n = arr.size
    m = gs.size
    dep = np.empty(n)
    j = 0
    prev = -np.inf
    for i in range(n):
        earliest = arr[i] if arr[i] > prev + d else prev + d
        di = np.inf
        while True:
            while j < m and ge[j] < earliest:
                j += 1
            if j == m:
                di = np.inf
                break
            di = earliest if earliest > gs[j] + d else gs[j] + d
            if di <= ge[j]:
                break
            j += 1
        dep[i] = di
        prev = di
    return dep


@jit
def area(arr, dep, horizon):
    """Integral of the queue length over [0, horizon]: summed sojourns."""
    s = 0.0
    for i in range(arr.size):
        if arr[i] >= horizon:
            break
        end = dep[i] if dep[i] < horizon else horizon
        s += end - arr[i]
    return s


@jit
def departures_before(dep, horizon):
    k = 0
    while k < dep.size and dep[k] < horizon:
        k += 1
    return dep[:k].copy()


@jit
def path_areas(arr1, arr2, arr4, g1s, g1e, g2s, g2e, g3s, g3e, g4s, g4e, d, horizon):
    """Per-queue integrals of x_n over [0, horizon] for one sample path."""
    out = np.empty(4)
    dep1 = serve(arr1, g1s, g1e, d[0])
    out[0] = area(arr1, dep1, horizon)
    dep2 = serve(arr2, g2s, g2e, d[1])
    out[1] = area(arr2, dep2, horizon)
    arr3 = departures_before(dep1, horizon)
    dep3 = serve(arr3, g3s, g3e, d[2])
    out[2] = area(arr3, dep3, horizon)
    dep4 = serve(arr4, g4s, g4e, d[3])
    out[3] = area(arr4, dep4, horizon)
    return out


@jit
def queue3_area_table(dep1, n1, g3s, g3e, g3n, d3, horizon):
    """Queue-3 integrals for every (queue-1 timing, queue-3 timing, seed).

    ``dep1`` is (P, R, N): queue-1 departures per timing and seed, padded;
    ``n1`` (P, R) holds the valid counts.  ``g3s``/``g3e`` are (Q, G) green
    windows of queue 3 per intersection-2 timing, ``g3n`` their counts.
    Returns a (P, Q, R) array.
    """
    P, R = n1.shape
    Q = g3n.shape[0]
    out = np.empty((P, Q, R))
    for p in range(P):
        for q in range(Q):
            gs = g3s[q, : g3n[q]]
            ge = g3e[q, : g3n[q]]
            for r in range(R):
                arr3 = dep1[p, r, : n1[p, r]]
                out[p, q, r] = area(arr3, serve(arr3, gs, ge, d3), horizon)
    return out


@jit
def assemble_records(bt, bk, bq, alpha_nom, H, green0, cap):
    """Turn sorted ARR/DEP/G2R/R2G events into the full trace.

    Adds E/S records per timestamp: E when a queue that held cars before the
    timestamp is empty after all its arrivals and departures, S for the
    reverse.  Zero-length empty periods therefore never appear.  Rate columns
    carry the nominal rates (Poisson intensities, service rates).
    """
    nb = bt.size
    rf = np.zeros((cap, 6))
    ri = np.zeros((cap, 2), dtype=np.int64)
    rx = np.zeros((cap, 4))
    rg = np.zeros((cap, 4), dtype=np.bool_)
    x = np.zeros(4)
    green = green0.copy()
    x_start = np.zeros(4)
    xt = np.zeros(4)
    a_b = np.empty(4)
    b_b = np.empty(4)
    a_a = np.empty(4)
    b_a = np.empty(4)
    snap = np.empty((2, 4, 4))
    k = 0
    i = 0
    while i < nb:
        if k + 16 > cap:
            return 1, k, rf, ri, rx, rg, x
        t = bt[i]
        j = i
        while j < nb and bt[j] == t:
            j += 1
        for n in range(4):
            x_start[n] = x[n]
        p = i
        while p < j and bk[p] <= DEP:
            q = bq[p] - 1
            fill_rates(x, green, alpha_nom, H, a_b, b_b)
            if bk[p] == DEP:
                x[q] -= 1.0
            else:
                x[q] += 1.0
            fill_rates(x, green, alpha_nom, H, a_a, b_a)
            k = _put(rf, ri, rx, rg, k, t, bk[p], q, a_b, a_a, b_b, b_a, H, x, green)
            p += 1
        for n in range(4):
            if x_start[n] > 0.0 and x[n] == 0.0:
                for m in range(4):
                    xt[m] = x[m]
                xt[n] = x_start[n]
                fill_rates(xt, green, alpha_nom, H, a_b, b_b)
                fill_rates(x, green, alpha_nom, H, a_a, b_a)
                k = _put(rf, ri, rx, rg, k, t, E, n, a_b, a_a, b_b, b_a, H, x, green)
        while p < j:
            q = bq[p] - 1
            inter = 0 if q < 2 else 1
            if bk[p] == G2R:
                fill_rates(x, green, alpha_nom, H, a_b, b_b)
                green[2 * inter] = not green[2 * inter]
                green[2 * inter + 1] = not green[2 * inter + 1]
                fill_rates(x, green, alpha_nom, H, a_a, b_a)
                for n in range(4):
                    snap[inter, 0, n] = a_b[n]
                    snap[inter, 1, n] = a_a[n]
                    snap[inter, 2, n] = b_b[n]
                    snap[inter, 3, n] = b_a[n]
            k = _put(rf, ri, rx, rg, k, t, bk[p], q, snap[inter, 0], snap[inter, 1],
                     snap[inter, 2], snap[inter, 3], H, x, green)
            p += 1
        for n in range(4):
            if x_start[n] == 0.0 and x[n] > 0.0:
                fill_rates(x, green, alpha_nom, H, a_a, b_a)
                k = _put(rf, ri, rx, rg, k, t, S, n, a_a, a_a, b_a, b_a, H, x, green)
        i = j
    return 0, k, rf, ri, rx, rg, x
