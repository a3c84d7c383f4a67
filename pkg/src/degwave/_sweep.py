"""Compiled backward-characteristic sweep used by one application of the Picard map.

For every anchor (t_j, x_i) of a slab the characteristic of one family is
traced back to the slab start with classical RK4 (step = the slab time step,
speed linear in time between stored levels), the spatial Jacobian is carried
along with the same stages, and the transported invariant and its derivative
are accumulated with the trapezoid rule on the path samples.

All field arrays are ``(m, n)`` stacks of time levels with matching node
slopes (zero slopes plus ``cubic=False`` give piecewise-linear evaluation).
"""
import math

import numpy as np
from numba import config, njit, prange

# skip probing an outdated system TBB; OpenMP or the built-in pool suffice
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(cache=True, inline="always")
def _eval(vals, slopes, x_min, h, n, x, cubic):
    s = (x - x_min) / h
    i = int(math.floor(s))
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    t = s - i
    if t == 0.0:
        return vals[i]
    if not cubic:
        return vals[i] + t * (vals[i + 1] - vals[i])
    t2 = t * t
    t3 = t2 * t
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * vals[i] + (3.0 * t2 - 2.0 * t3) * vals[i + 1]
            + h * ((t3 - 2.0 * t2 + t) * slopes[i] + (t3 - t2) * slopes[i + 1]))


@njit(cache=True, inline="always")
def _clamp(x, lo, hi):
    if x < lo:
        return lo, True
    if x > hi:
        return hi, True
    return x, False


@njit(cache=True, parallel=True)
def characteristic_sweep(x_min, h, dt, sign, cubic,
                         speed, speed_m, speedx, speedx_m,
                         src, src_m, dsrc, dsrc_m,
                         f0, f0_m, g0, g0_m):
    """Trace every anchor of a slab back to its first level.

    Returns ``(f, g, jac, feet, hits)``: the transported value
    f(t_j, x_i) = f0(foot) + int src, its x-derivative
    g = g0(foot) * J(0) + int J(s) dsrc, the foot Jacobian J(0), the foot
    position and whether the path touched the grid edge.
    """
    m, n = speed.shape
    x_max = x_min + (n - 1) * h
    f = np.empty((m, n))
    g = np.empty((m, n))
    jac = np.empty((m, n))
    feet = np.empty((m, n))
    hits = np.zeros((m, n), dtype=np.bool_)
    for i in prange(n):
        xi = x_min + i * h
        f[0, i] = f0[i]
        g[0, i] = g0[i]
        jac[0, i] = 1.0
        feet[0, i] = xi
        for j in range(1, m):
            X = xi
            J = 1.0
            hit = False
            acc_f = 0.5 * src[j, i]
            acc_g = 0.5 * dsrc[j, i]
            for k in range(j - 1, -1, -1):
                # stage 1 at level k+1
                c1 = _eval(speed[k + 1], speed_m[k + 1], x_min, h, n, X, cubic)
                d1 = _eval(speedx[k + 1], speedx_m[k + 1], x_min, h, n, X, cubic)
                k1 = sign * c1
                l1 = sign * d1 * J
                # stages 2, 3 at the half level
                X2, hh = _clamp(X - 0.5 * dt * k1, x_min, x_max)
                hit = hit or hh
                J2 = J - 0.5 * dt * l1
                c2 = 0.5 * (_eval(speed[k + 1], speed_m[k + 1], x_min, h, n, X2, cubic)
                            + _eval(speed[k], speed_m[k], x_min, h, n, X2, cubic))
                d2 = 0.5 * (_eval(speedx[k + 1], speedx_m[k + 1], x_min, h, n, X2, cubic)
                            + _eval(speedx[k], speedx_m[k], x_min, h, n, X2, cubic))
                k2 = sign * c2
                l2 = sign * d2 * J2
                X3, hh = _clamp(X - 0.5 * dt * k2, x_min, x_max)
                hit = hit or hh
                J3 = J - 0.5 * dt * l2
                c3 = 0.5 * (_eval(speed[k + 1], speed_m[k + 1], x_min, h, n, X3, cubic)
                            + _eval(speed[k], speed_m[k], x_min, h, n, X3, cubic))
                d3 = 0.5 * (_eval(speedx[k + 1], speedx_m[k + 1], x_min, h, n, X3, cubic)
                            + _eval(speedx[k], speedx_m[k], x_min, h, n, X3, cubic))
                k3 = sign * c3
                l3 = sign * d3 * J3
                # stage 4 at level k
                X4, hh = _clamp(X - dt * k3, x_min, x_max)
                hit = hit or hh
                J4 = J - dt * l3
                c4 = _eval(speed[k], speed_m[k], x_min, h, n, X4, cubic)
                d4 = _eval(speedx[k], speedx_m[k], x_min, h, n, X4, cubic)
                k4 = sign * c4
                l4 = sign * d4 * J4
                X, hh = _clamp(X - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), x_min, x_max)
                hit = hit or hh
                J = J - dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
                w = 0.5 if k == 0 else 1.0
                acc_f += w * _eval(src[k], src_m[k], x_min, h, n, X, cubic)
                acc_g += w * J * _eval(dsrc[k], dsrc_m[k], x_min, h, n, X, cubic)
            f[j, i] = _eval(f0, f0_m, x_min, h, n, X, cubic) + dt * acc_f
            g[j, i] = _eval(g0, g0_m, x_min, h, n, X, cubic) * J + dt * acc_g
            jac[j, i] = J
            feet[j, i] = X
            hits[j, i] = hit
    return f, g, jac, feet, hits
