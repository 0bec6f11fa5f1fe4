"""Compiled inner loops for orbit-based estimators.

All kernels work on the closed-form cosine fiber

    A(x) = [[E - 2*lam*cos(2*pi*(x + xi)), -1], [1, 0]]

and run in float64.  The angle update uses the exact factorization
A = R(pi/2) * shear, whose two parts each move directions by less than a
half turn inside a fixed half-plane, so the lift is tracked without any
branch ambiguity.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def am_rotation_sums(e, lam, xi, alpha, n, x0, theta0):
    """Accumulated lift angle after n//2 and n steps."""
    c = math.cos(theta0)
    s = math.sin(theta0)
    x = x0 % 1.0
    half = n // 2
    tot = 0.0
    tot_half = 0.0
    for k in range(n):
        t = e - 2.0 * lam * math.cos(TWO_PI * ((x + xi) % 1.0))
        tot += 0.5 * math.pi + math.atan2(-t * c * c, 1.0 - t * s * c)
        u = t * c - s
        g = math.sqrt(u * u + c * c)
        c, s = u / g, c / g
        x += alpha
        if x >= 1.0:
            x -= 1.0
        if k + 1 == half:
            tot_half = tot
    return tot_half, tot


@njit(cache=True)
def am_lyapunov_sums(e, lam, xi, alpha, n, x0):
    """Partial sums of log growth factors at n//4, n//2, 3n//4, n."""
    c = 1.0
    s = 0.0
    x = x0 % 1.0
    q1 = n // 4
    q2 = n // 2
    q3 = (3 * n) // 4
    acc = 0.0
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    for k in range(n):
        t = e - 2.0 * lam * math.cos(TWO_PI * ((x + xi) % 1.0))
        u = t * c - s
        g = math.sqrt(u * u + c * c)
        acc += math.log(g)
        c, s = u / g, c / g
        x += alpha
        if x >= 1.0:
            x -= 1.0
        if k + 1 == q1:
            s1 = acc
        if k + 1 == q2:
            s2 = acc
        if k + 1 == q3:
            s3 = acc
    return s1, s2, s3, acc


@njit(cache=True)
def am_power_lognorms(e, lam, xi, alpha, ns, x0):
    """log of the Frobenius norm of the n-step transfer product, for each
    n in the sorted array ns, computed in one sweep with scale factoring."""
    a11 = 1.0
    a12 = 0.0
    a21 = 0.0
    a22 = 1.0
    logscale = 0.0
    x = x0 % 1.0
    out = np.empty(len(ns))
    j = 0
    n_max = ns[-1]
    for k in range(n_max):
        t = e - 2.0 * lam * math.cos(TWO_PI * ((x + xi) % 1.0))
        b11 = t * a11 - a21
        b12 = t * a12 - a22
        a21, a22 = a11, a12
        a11, a12 = b11, b12
        m = abs(a11) + abs(a12) + abs(a21) + abs(a22)
        if m > 1e200:
            a11 /= m
            a12 /= m
            a21 /= m
            a22 /= m
            logscale += math.log(m)
        x += alpha
        if x >= 1.0:
            x -= 1.0
        while j < len(ns) and k + 1 == ns[j]:
            out[j] = logscale + 0.5 * math.log(
                a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22)
            j += 1
    return out


def warmup():
    """Trigger JIT compilation once (cached across sessions)."""
    am_rotation_sums(0.0, 1.0, 0.0, 0.5, 1000, 0.0, 0.0)
    am_lyapunov_sums(0.0, 1.0, 0.0, 0.5, 1000, 0.0)
    am_power_lognorms(0.0, 1.0, 0.0, 0.5, np.array([8, 13]), 0.0)
