"""Event-driven integration of the stochastic flow model.

Between events every drift is constant, so the state is advanced exactly to
the next event: a light switch, an exogenous rate change, or a queue hitting
zero.  Records go into preallocated buffers; the caller grows them and
retries when the kernel reports overflow.
"""

import numpy as np

from .._jit import jit
from .common import E, EMPTY_TOL, G2R, R2G, RATE, S, fill_drift, fill_rates
from .common import put_record as _put


@jit
def _starts(t, x, green, nep, a_exo, H, rf, ri, rx, rg, k):
    """Emit S records for empty queues whose drift just turned positive."""
    alpha = np.empty(4)
    beta = np.empty(4)
    f = np.empty(4)
    fill_rates(x, green, a_exo, H, alpha, beta)
    fill_drift(x, green, alpha, H, f)
    for n in range(4):
        if not nep[n] and f[n] > 0.0:
            nep[n] = True
            k = _put(rf, ri, rx, rg, k, t, S, n, alpha, alpha, beta, beta, H, x, green)
    return k


@jit
def simulate_fluid(H, x0, green0, sw, rate_t, rate_v, rate_n, horizon, cap):
    """Integrate the four fluid queues over [0, horizon).

    Parameters
    ----------
    H : (4,) service rates.
    x0 : (4,) initial contents.
    green0 : (4,) bool, lights at t=0.
    sw : (2, K) switch times of each intersection, increasing, padded with inf.
    rate_t, rate_v : (4, M) change times / levels of the exogenous arrival
        rates; ``rate_t[n, 0]`` is 0.  Row 2 (queue 3) is ignored.
    rate_n : (4,) number of levels per row.

    Returns
    -------
    status, n_records, rf, ri, rx, rg, xT, cum_in, cum_out
        status is 0 on success and 1 when ``cap`` records were not enough.
    """
    rf = np.zeros((cap, 6))
    ri = np.zeros((cap, 2), dtype=np.int64)
    rx = np.zeros((cap, 4))
    rg = np.zeros((cap, 4), dtype=np.bool_)

    x = x0.copy()
    green = green0.copy()
    nep = np.zeros(4, dtype=np.bool_)
    for n in range(4):
        nep[n] = x[n] > 0.0
    a_exo = np.zeros(4)
    ridx = np.zeros(4, dtype=np.int64)
    for n in (0, 1, 3):
        if rate_n[n] > 0:
            a_exo[n] = rate_v[n, 0]
    sidx = np.zeros(2, dtype=np.int64)
    cum_in = np.zeros(4)
    cum_out = np.zeros(4)

    alpha = np.empty(4)
    beta = np.empty(4)
    f = np.empty(4)
    a_b = np.empty(4)
    b_b = np.empty(4)
    te = np.empty(4)
    g_old = np.zeros(2, dtype=np.int64)
    snap = np.empty((2, 4, 4))  # [switch, (a-, a+, b-, b+), queue]

    k = 0
    t = 0.0
    k = _starts(t, x, green, nep, a_exo, H, rf, ri, rx, rg, k)

    while True:
        if k + 16 > cap:
            return 1, k, rf, ri, rx, rg, x, cum_in, cum_out

        fill_rates(x, green, a_exo, H, alpha, beta)
        fill_drift(x, green, alpha, H, f)

        t_next = horizon
        for i in range(2):
            if sw[i, sidx[i]] < t_next:
                t_next = sw[i, sidx[i]]
        for n in (0, 1, 3):
            j = ridx[n] + 1
            if j < rate_n[n] and rate_t[n, j] < t_next:
                t_next = rate_t[n, j]
        for n in range(4):
            te[n] = np.inf
            if nep[n] and f[n] < 0.0:
                te[n] = t + x[n] / (-f[n])
                if te[n] < t_next:
                    t_next = te[n]

        dt = t_next - t
        for n in range(4):
            cum_in[n] += alpha[n] * dt
            cum_out[n] += beta[n] * dt
            x[n] += f[n] * dt
            if x[n] < 0.0:
                x[n] = 0.0
        t = t_next
        if t >= horizon:
            break

        # NEP ends
        for n in range(4):
            if nep[n] and f[n] < 0.0 and (te[n] <= t or x[n] <= EMPTY_TOL):
                # rates just before emptying: queue n still holds fluid
                x[n] = 1.0
                fill_rates(x, green, a_exo, H, a_b, b_b)
                x[n] = 0.0
                nep[n] = False
                fill_rates(x, green, a_exo, H, alpha, beta)
                k = _put(rf, ri, rx, rg, k, t, E, n, a_b, alpha, b_b, beta, H, x, green)

        # exogenous rate changes
        for n in (0, 1, 3):
            j = ridx[n] + 1
            if j < rate_n[n] and rate_t[n, j] <= t:
                fill_rates(x, green, a_exo, H, a_b, b_b)
                ridx[n] = j
                a_exo[n] = rate_v[n, j]
                fill_rates(x, green, a_exo, H, alpha, beta)
                k = _put(rf, ri, rx, rg, k, t, RATE, n, a_b, alpha, b_b, beta, H, x, green)

        # light switches: both records of an intersection share one snapshot
        n_sw = 0
        for i in range(2):
            if sw[i, sidx[i]] <= t:
                sidx[i] += 1
                g_old[n_sw] = 2 * i if green[2 * i] else 2 * i + 1
                fill_rates(x, green, a_exo, H, a_b, b_b)
                green[2 * i] = not green[2 * i]
                green[2 * i + 1] = not green[2 * i + 1]
                fill_rates(x, green, a_exo, H, alpha, beta)
                for n in range(4):
                    snap[n_sw, 0, n] = a_b[n]
                    snap[n_sw, 1, n] = alpha[n]
                    snap[n_sw, 2, n] = b_b[n]
                    snap[n_sw, 3, n] = beta[n]
                n_sw += 1
        for s in range(n_sw):
            q = g_old[s]
            k = _put(rf, ri, rx, rg, k, t, G2R, q, snap[s, 0], snap[s, 1], snap[s, 2], snap[s, 3], H, x, green)
        for s in range(n_sw):
            q = g_old[s] + 1 if g_old[s] % 2 == 0 else g_old[s] - 1
            k = _put(rf, ri, rx, rg, k, t, R2G, q, snap[s, 0], snap[s, 1], snap[s, 2], snap[s, 3], H, x, green)

        k = _starts(t, x, green, nep, a_exo, H, rf, ri, rx, rg, k)

    return 0, k, rf, ri, rx, rg, x, cum_in, cum_out
