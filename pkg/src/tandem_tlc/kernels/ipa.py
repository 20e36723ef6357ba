"""Sample-path derivative propagation over an event trace.

State layout (0-based):

``xp[n, i]``   dx_n/dtheta_i, constant between events.
``cnt[I, 0]``  G2R count of the lead queue of intersection I (queue 1 or 3).
``cnt[I, 1]``  R2G count of that lead queue.
``nep[n]``     queue n is inside a non-empty period.
``green[n]``   light of queue n.
``hcur[n]``    latest service rate seen for queue n.
``dL[i]``      running gradient of the sample cost.

Light-switch times are affine in theta: the k-th G2R of queue 1 happens at
k*theta_1 + (k-1)*theta_2, so its theta-derivative is the pair of switch
counts.  At a light event every affected queue's derivative jumps by
(drift before - drift after) * tau'.  A NEP end resets its queue's row, and
the end of a queue-1 NEP hands queue 1's row over to queue 3.  NEP starts
only count when the queue's drift is positive.
"""

import numpy as np

from .._jit import jit
from .common import E, G2R, R2G, S


@jit
def accumulate(xp, nep, dL, w, dt, horizon):
    for i in range(4):
        s = 0.0
        for n in range(4):
            if nep[n]:
                s += w[n] * xp[n, i]
        dL[i] += s * dt / horizon


@jit
def apply_event(xp, cnt, nep, green, hcur, tau, kind, n, am, ap, bm, bp, h, xn_after,
                fresh=False):
    """Apply one event to the derivative state.

    ``tau`` receives the event-time derivative.  ``fresh`` says queue n's NEP
    was opened at this same timestamp.  Returns 1 when an E event has a
    non-negative pre-event drift (treated as exogenous), else 0.
    """
    for i in range(4):
        tau[i] = 0.0
    hcur[n] = h
    degenerate = 0

    if kind == G2R or kind == R2G:
        inter = 0 if n < 2 else 1
        lead = 2 * inter
        if kind == G2R:
            if n == lead:
                cnt[inter, 0] += 1
            else:
                cnt[inter, 1] += 1
        tau[lead] = cnt[inter, 0]
        tau[lead + 1] = cnt[inter, 1]

        if kind == G2R:
            green[n] = False
            if nep[n]:
                # drift alpha - h becomes alpha
                for i in range(4):
                    xp[n, i] -= h * tau[i]
            elif ap > 0.0:
                # empty queue starts filling at alpha the moment it turns red
                for i in range(4):
                    xp[n, i] = -ap * tau[i]
                nep[n] = True
            if n == 0 and nep[2]:
                # queue 3 loses its inflow beta_1
                for i in range(4):
                    xp[2, i] += bm * tau[i]
        else:
            green[n] = True
            if nep[n]:
                if xn_after <= 0.0 and not fresh:
                    # nothing arrived during the red: no NEP to continue
                    for i in range(4):
                        xp[n, i] = 0.0
                    nep[n] = False
                else:
                    for i in range(4):
                        xp[n, i] += h * tau[i]
            if n == 0:
                if nep[2]:
                    for i in range(4):
                        xp[2, i] -= bp * tau[i]
                else:
                    inflow = bp if not green[2] else bp - hcur[2]
                    if inflow > 0.0:
                        for i in range(4):
                            xp[2, i] = -inflow * tau[i]
                        nep[2] = True

    elif kind == E:
        f = am - bm
        if f < 0.0:
            for i in range(4):
                tau[i] = -xp[n, i] / f
            if n == 0 and nep[2]:
                for i in range(4):
                    xp[2, i] += xp[0, i]
        else:
            degenerate = 1
        for i in range(4):
            xp[n, i] = 0.0
        nep[n] = False

    elif kind == S:
        # a green queue fed below its service rate stays empty in the flow
        # model; a car-level blip there is not a non-empty period
        if not green[n] or ap - h > 0.0:
            nep[n] = True

    return degenerate


@jit
def _beta(green, busy, alpha, h):
    if not green:
        return 0.0
    if busy:
        return h
    return alpha if alpha < h else h


@jit
def run_trace(rf, ri, rx, n_rec, w, H, green0, nep0, horizon, ahat, derive):
    """Propagate derivatives over a whole trace.

    With ``derive`` set, the rate columns of ``rf`` are ignored: arrival
    rates of queues 1, 2, 4 come from ``ahat`` (one row per record), queue 3
    is fed at queue 1's departure rate, and departure rates follow from the
    estimator's own NEP flags and the service rates ``H``.

    Returns ``(status, dL, xp, cnt, n_degenerate)``; status 1 flags records
    out of time order.
    """
    xp = np.zeros((4, 4))
    cnt = np.zeros((2, 2))
    nep = nep0.copy()
    opened = np.full(4, -1.0)
    was = np.zeros(4, dtype=np.bool_)
    green = green0.copy()
    hcur = H.copy()
    dL = np.zeros(4)
    tau = np.zeros(4)
    n_deg = 0
    t_last = 0.0
    for k in range(n_rec):
        t = rf[k, 0]
        if t < t_last:
            return 1, dL, xp, cnt, n_deg
        accumulate(xp, nep, dL, w, t - t_last, horizon)
        t_last = t
        kind = ri[k, 0]
        n = ri[k, 1] - 1
        for m in range(4):
            was[m] = nep[m]
        fresh = nep[n] and opened[n] == t
        if derive:
            if n == 2:
                a = _beta(green[0], nep[0], ahat[k, 0], H[0])
            else:
                a = ahat[k, n]
            g_before = green[n]
            g_after = green[n]
            if kind == G2R:
                g_before, g_after = True, False
            elif kind == R2G:
                g_before, g_after = False, True
            busy_after = nep[n] and not (kind == R2G and rx[k, n] <= 0.0)
            bm = H[n] if kind == E else _beta(g_before, nep[n], a, H[n])
            bp = _beta(g_after, busy_after, a, H[n])
            n_deg += apply_event(xp, cnt, nep, green, hcur, tau, kind, n,
                                 a, a, bm, bp, H[n], rx[k, n], fresh)
            if nep[2] and rx[k, 2] <= 0.0:
                # a queue-3 NEP with no content in the nominal path exists
                # only to first order; it ends once queue 3 would drain
                inflow = _beta(green[0], nep[0], ahat[k, 0], H[0])
                if inflow - (H[2] if green[2] else 0.0) < 0.0:
                    for i in range(4):
                        xp[2, i] = 0.0
                    nep[2] = False
        else:
            n_deg += apply_event(xp, cnt, nep, green, hcur, tau, kind, n,
                                 rf[k, 1], rf[k, 2], rf[k, 3], rf[k, 4], rf[k, 5], rx[k, n],
                                 fresh)
        for m in range(4):
            if nep[m] and not was[m]:
                opened[m] = t
    if horizon > t_last:
        accumulate(xp, nep, dL, w, horizon - t_last, horizon)
    return 0, dL, xp, cnt, n_deg
