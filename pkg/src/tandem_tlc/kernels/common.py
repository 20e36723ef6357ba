"""Rate bookkeeping shared by the simulation and IPA kernels.

All arrays here are 0-based: index 0 is queue 1, index 2 is queue 3.
"""

import numpy as np

from .._jit import jit

# EventKind values, repeated as plain ints for the compiled code
ARR = 0
DEP = 1
E = 2
RATE = 3
G2R = 4
R2G = 5
S = 6

EMPTY_TOL = 1e-9


@jit
def beta_of(green, x, alpha, h):
    if not green:
        return 0.0
    if x > 0.0:
        return h
    return min(alpha, h)


@jit
def fill_rates(x, green, alpha_exo, H, alpha, beta):
    """Write alpha/beta for the current mode; queue 3 is fed by queue 1."""
    alpha[0] = alpha_exo[0]
    alpha[1] = alpha_exo[1]
    alpha[3] = alpha_exo[3]
    beta[0] = beta_of(green[0], x[0], alpha[0], H[0])
    alpha[2] = beta[0]
    beta[1] = beta_of(green[1], x[1], alpha[1], H[1])
    beta[2] = beta_of(green[2], x[2], alpha[2], H[2])
    beta[3] = beta_of(green[3], x[3], alpha[3], H[3])


@jit
def drift_of(green, x, alpha, h):
    if not green:
        return alpha
    if x > 0.0:
        return alpha - h
    d = alpha - h
    return d if d > 0.0 else 0.0


@jit
def fill_drift(x, green, alpha, H, f):
    for n in range(4):
        f[n] = drift_of(green[n], x[n], alpha[n], H[n])


@jit
def put_record(rf, ri, rx, rg, k, t, kind, q, a_before, a_after, b_before, b_after, H, x, green):
    """Write record ``k`` for 0-based queue ``q``; returns ``k + 1``.

    Float columns: time, alpha-, alpha+, beta-, beta+, h.
    """
    rf[k, 0] = t
    rf[k, 1] = a_before[q]
    rf[k, 2] = a_after[q]
    rf[k, 3] = b_before[q]
    rf[k, 4] = b_after[q]
    rf[k, 5] = H[q]
    ri[k, 0] = kind
    ri[k, 1] = q + 1
    for n in range(4):
        rx[k, n] = x[n]
        rg[k, n] = green[n]
    return k + 1


def switch_schedule(theta_green, theta_red, horizon):
    """Cumulative switch times of one intersection, past ``horizon``.

    The light that is green at t=0 runs for ``theta_green``, then the crossing
    light for ``theta_red``, and so on.
    """
    cycle = theta_green + theta_red
    k = int(np.ceil(horizon / cycle)) + 2
    steps = np.empty(2 * k, dtype=np.float64)
    steps[0::2] = theta_green
    steps[1::2] = theta_red
    return np.cumsum(steps)
