"""Compiled DOP853 stepping for psi'' = (V(z) - E) psi / hbar**2 on a segment.

The Butcher tableau is taken from scipy's DOP853 implementation.
"""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

N_STAGES = 12
A = np.ascontiguousarray(_dop.A[:N_STAGES, :N_STAGES], dtype=np.float64)
B = np.ascontiguousarray(_dop.B, dtype=np.float64)
C = np.ascontiguousarray(_dop.C[:N_STAGES], dtype=np.float64)
E3 = np.ascontiguousarray(_dop.E3, dtype=np.float64)
E5 = np.ascontiguousarray(_dop.E5, dtype=np.float64)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
RENORM_HIGH = 1e100
RENORM_LOW = 1e-100

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAXSTEPS = 2


@njit(cache=True)
def _f(coef, E, inv_h2, z):
    return inv_h2 * ((((coef[3] * z + coef[2]) * z + coef[1]) * z + coef[0]) - E)


@njit(cache=True)
def integrate_segment(coef, E, inv_h2, z0, u, length, psi, dpsi, rtol, h0, fixed_n, max_steps):
    """Integrate from z0 along z0 + s*u, 0 <= s <= length.

    Returns (psi, dpsi, log_scale, s_reached, n_steps, h_next, status).
    ``log_scale`` is the real log of the positive factor removed by
    renormalization; the true state is ``exp(log_scale) * (psi, dpsi)``.
    """
    Ks = np.empty((13, 2), dtype=np.complex128)
    y = np.empty(2, dtype=np.complex128)
    y[0] = psi
    y[1] = dpsi
    ystage = np.empty(2, dtype=np.complex128)
    ynew = np.empty(2, dtype=np.complex128)
    log_scale = 0.0
    s = 0.0
    n = 0
    status = STATUS_OK
    if length <= 0.0:
        return y[0], y[1], log_scale, s, n, h0, status
    if fixed_n > 0:
        h = length / fixed_n
    else:
        h = h0
        if h <= 0.0:
            h = min(length, 0.1)
    h_min = 1e-14 * max(length, 1.0)
    h_keep = 0.0
    while s < length:
        if n >= max_steps:
            status = STATUS_MAXSTEPS
            break
        last = False
        if s + h >= length * (1.0 - 1e-14):
            h_keep = max(h, h_keep)
            h = length - s
            last = True
        z = z0 + s * u
        fz = _f(coef, E, inv_h2, z)
        Ks[0, 0] = u * y[1]
        Ks[0, 1] = u * fz * y[0]
        for st in range(1, N_STAGES):
            ystage[0] = y[0]
            ystage[1] = y[1]
            for j in range(st):
                a = A[st, j]
                if a != 0.0:
                    ystage[0] += h * a * Ks[j, 0]
                    ystage[1] += h * a * Ks[j, 1]
            fs = _f(coef, E, inv_h2, z + C[st] * h * u)
            Ks[st, 0] = u * ystage[1]
            Ks[st, 1] = u * fs * ystage[0]
        ynew[0] = y[0]
        ynew[1] = y[1]
        for j in range(N_STAGES):
            ynew[0] += h * B[j] * Ks[j, 0]
            ynew[1] += h * B[j] * Ks[j, 1]
        fn = _f(coef, E, inv_h2, z + h * u)
        Ks[12, 0] = u * ynew[1]
        Ks[12, 1] = u * fn * ynew[0]
        if fixed_n > 0:
            err = 0.0
        else:
            kap = max(1.0, np.sqrt(abs(fz)))
            nrm = max(abs(y[0]) + abs(y[1]) / kap, abs(ynew[0]) + abs(ynew[1]) / kap)
            sc0 = rtol * nrm
            sc1 = rtol * nrm * kap
            e5_0 = 0j
            e5_1 = 0j
            e3_0 = 0j
            e3_1 = 0j
            for j in range(13):
                e5_0 += E5[j] * Ks[j, 0]
                e5_1 += E5[j] * Ks[j, 1]
                e3_0 += E3[j] * Ks[j, 0]
                e3_1 += E3[j] * Ks[j, 1]
            n5 = (abs(e5_0) / sc0) ** 2 + (abs(e5_1) / sc1) ** 2
            n3 = (abs(e3_0) / sc0) ** 2 + (abs(e3_1) / sc1) ** 2
            if n5 == 0.0 and n3 == 0.0:
                err = 0.0
            else:
                err = h * n5 / np.sqrt((n5 + 0.01 * n3) * 2.0)
        if err <= 1.0:
            s = length if last else s + h
            y[0] = ynew[0]
            y[1] = ynew[1]
            n += 1
            kap = max(1.0, np.sqrt(abs(fn)))
            m = abs(y[0]) + abs(y[1]) / kap
            if m > RENORM_HIGH or (m < RENORM_LOW and m > 0.0):
                y[0] /= m
                y[1] /= m
                log_scale += np.log(m)
            if fixed_n == 0:
                if err == 0.0:
                    fac = MAX_FACTOR
                else:
                    fac = min(MAX_FACTOR, SAFETY * err ** (-1.0 / 8.0))
                if not last:
                    h = h * fac
        else:
            fac = max(MIN_FACTOR, SAFETY * err ** (-1.0 / 8.0))
            h = h * fac
            if h < h_min:
                status = STATUS_UNDERFLOW
                break
    if status == STATUS_OK and h_keep > 0.0:
        h = h_keep
    return y[0], y[1], log_scale, s, n, h, status
