"""Compiled closed loop of the built-in example.

Mirrors ``simulation.ClosedLoop.field`` for the forced Van der Pol plant with
the output-injection immersion (optionally reparametrized and clamped). It
exists only for speed; ``tests/test_simulation.py`` checks it against the
generic path.

State layout: rho(3), w(2), z(2), e, xi(4), theta_hat(5), X(3x5 row-major).
"""

import numpy as np
from numba import njit

N_STATE = 32


@njit(cache=True)
def _clamp(y, Y, bw):
    a = abs(y)
    if a <= Y:
        return y
    s = min((a - Y) / bw, 1.0)
    val = Y + bw * (s - 0.5 * s * s)
    return val if y > 0 else -val


@njit(cache=True)
def _dead_zone(x, ell):
    a = abs(x)
    if a <= ell:
        return 0.0
    if a >= ell + 1.0:
        return x
    s = a - ell
    val = (3.0 * s * s - 2.0 * s * s * s) * (ell + 1.0) + (s * s * s - s * s)
    return val if x > 0 else -val


@njit(cache=True)
def field(x, T, F, G, H0, k, ell, Y, bw, gain):
    out = np.empty(N_STATE)
    om, sg, mu = x[0], x[1], x[2]
    w1, w2, z1, z2, e = x[3], x[4], x[5], x[6], x[7]
    xi = x[8:12]
    th = x[12:17]
    X = x[17:32].reshape(3, 5)

    v = -k * e
    y = xi[0]
    if Y > 0.0:
        y = _clamp(y, Y, bw)
    y3 = y * y * y
    # natural Omega rows, then Omega T
    O0 = np.zeros((4, 5))
    O0[0, 0] = -y3
    O0[1, 1] = -y
    O0[2, 2] = y
    O0[2, 3] = -y3
    O0[3, 4] = -y
    Om = O0 @ T

    beta = X[0] + Om[0]
    dz = np.empty(5)
    for j in range(5):
        dz[j] = _dead_zone(th[j], ell)

    # exosystem and plant
    for i in range(3):
        out[i] = gain * e
    out[3] = w2 + gain * z1 * e
    out[4] = -om * om * w1 + gain * z2 * e
    out[5] = z2
    out[6] = -sg * z1 - (z1 * z1 - 1.0) * z2 - w1 + e
    out[7] = -mu * z1 + xi[0] + v

    # regulator
    for i in range(4):
        acc = Om[i] @ th
        if i == 0:
            acc += y
        if i < 3:
            acc += xi[i + 1]
        h = H0[i]
        if i > 0:
            h += X[i - 1] @ beta
            acc -= X[i - 1] @ dz
        out[8 + i] = acc + h * v
    for j in range(5):
        out[12 + j] = beta[j] * v - dz[j]
    dX = F @ X + G @ Om
    out[17:32] = dX.ravel()
    return out


@njit(cache=True)
def run(x0, t0, h, n_full, last, record_every, T, F, G, H0, k, ell, Y, bw, gain):
    """Fixed-step RK4; returns (times, states, failed_at) with failed_at = -1 on success."""
    n_steps = n_full + 1
    n_rec = n_steps // record_every + 2
    times = np.empty(n_rec)
    states = np.empty((n_rec, N_STATE))
    times[0] = t0
    states[0] = x0
    j = 1
    x = x0.copy()
    t = t0
    for i in range(n_steps):
        step = h if i < n_full else last
        k1 = field(x, T, F, G, H0, k, ell, Y, bw, gain)
        k2 = field(x + 0.5 * step * k1, T, F, G, H0, k, ell, Y, bw, gain)
        k3 = field(x + 0.5 * step * k2, T, F, G, H0, k, ell, Y, bw, gain)
        k4 = field(x + step * k3, T, F, G, H0, k, ell, Y, bw, gain)
        x_new = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_new)):
            return times[:j], states[:j], t
        x = x_new
        t = t0 + (i + 1) * h if i < n_full else t0 + n_full * h + last
        if (i + 1) % record_every == 0 or i == n_steps - 1:
            times[j] = t
            states[j] = x
            j += 1
    return times[:j], states[:j], -1.0
