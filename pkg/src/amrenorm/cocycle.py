"""Skew-product maps over circle rotations and their orbit estimators.

A SkewMap is a frequency plus an SL(2,R)-valued fiber function.  The fiber
is either the closed-form cosine family (fast compiled orbits), a constant
matrix, a truncated matrix series, or an arbitrary callable.  Estimators
return the Lyapunov exponent and the fibered rotation number together with
a last-doubling error indicator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .arith import GoldenInt
from .sl2 import (
    DomainError,
    PolyMat,
    S_MAT,
    inv_sl2,
    polymat_eval,
    polymat_inv,
    polymat_mul,
    polymat_rescale,
)

TWO_PI = 2.0 * math.pi


class BranchTrackingError(RuntimeError):
    """Raised when the projective lift cannot be tracked unambiguously."""


def _inv_batch(mats):
    out = np.empty_like(mats)
    out[..., 0, 0] = mats[..., 1, 1]
    out[..., 0, 1] = -mats[..., 0, 1]
    out[..., 1, 0] = -mats[..., 1, 0]
    out[..., 1, 1] = mats[..., 0, 0]
    return out


# ---------------------------------------------------------------------------
# Fibers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AMFiber:
    """Cosine transfer fiber [[E - V(x), -1], [1, 0]], V = 2*lam*cos(2pi(x+xi))."""

    energy: float
    coupling: float
    phase: float = 0.0
    periodic = True

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * self.coupling * np.cos(TWO_PI * np.mod(x + self.phase, 1.0))

    def mat(self, x):
        x = np.asarray(x, dtype=float)
        t = self.energy - self.potential(x)
        out = np.zeros(t.shape + (2, 2))
        out[..., 0, 0] = t
        out[..., 0, 1] = -1.0
        out[..., 1, 0] = 1.0
        return out


@dataclass(frozen=True)
class ConstFiber:
    matrix: np.ndarray
    periodic = True

    def mat(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.matrix, x.shape + (2, 2)).copy()


@dataclass(frozen=True)
class PolyFiber:
    series: PolyMat
    periodic = False

    def mat(self, x):
        return polymat_eval(self.series, x)


@dataclass(frozen=True)
class FuncFiber:
    fn: object
    periodic: bool = True

    def mat(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.fn(x))


# ---------------------------------------------------------------------------
# Skew maps
# ---------------------------------------------------------------------------

def _freq_add(a, b):
    if isinstance(a, GoldenInt) and isinstance(b, GoldenInt):
        return a + b
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a + b
    return _freq_float(a) + _freq_float(b)


def _freq_neg(a):
    if isinstance(a, (GoldenInt, Fraction)):
        return -a
    return -_freq_float(a)


def _freq_float(a) -> float:
    return float(a)


@dataclass(frozen=True)
class SkewMap:
    """Map (x, y) -> (x + freq, fiber(x) y) on R x R^2."""

    freq: object
    fiber: object

    @property
    def freq_value(self) -> float:
        return _freq_float(self.freq)

    def mat(self, x):
        return self.fiber.mat(x)


def identity_map() -> SkewMap:
    return SkewMap(GoldenInt(0, 0), ConstFiber(np.eye(2)))


def am_map(energy, coupling, phase=0.0, freq=None) -> SkewMap:
    """Cosine-potential skew map; freq defaults to the inverse golden mean."""
    if freq is None:
        freq = GoldenInt(0, 1)
    return SkewMap(freq, AMFiber(float(energy), float(coupling), float(phase)))


def compose(f: SkewMap, g: SkewMap) -> SkewMap:
    """Composition f after g: frequency adds, fiber(x) = F(x + freq_g) G(x)."""
    freq = _freq_add(f.freq, g.freq)
    wg = g.freq_value
    if isinstance(f.fiber, PolyFiber) and isinstance(g.fiber, PolyFiber):
        shifted = polymat_rescale(f.fiber.series, 1.0, wg)
        return SkewMap(freq, PolyFiber(polymat_mul(shifted, g.fiber.series)))
    ff, gf = f.fiber, g.fiber
    periodic = ff.periodic and gf.periodic
    return SkewMap(freq, FuncFiber(lambda x: ff.mat(np.asarray(x, float) + wg) @ gf.mat(x),
                                   periodic=periodic))


def inverse(g: SkewMap) -> SkewMap:
    """Inverse map: freq negates, fiber(x) = G(x - freq)^(-1)."""
    freq = _freq_neg(g.freq)
    w = g.freq_value
    if isinstance(g.fiber, ConstFiber):
        return SkewMap(freq, ConstFiber(inv_sl2(g.fiber.matrix)))
    if isinstance(g.fiber, PolyFiber):
        shifted = polymat_rescale(g.fiber.series, 1.0, -w)
        return SkewMap(freq, PolyFiber(polymat_inv(shifted)))
    gf = g.fiber
    return SkewMap(freq, FuncFiber(lambda x: _inv_batch(gf.mat(np.asarray(x, float) - w)),
                                   periodic=gf.periodic))


def conjugate_const(g: SkewMap, c) -> SkewMap:
    """Constant fiber conjugation x -> C^{-1} G(x) C (frequency unchanged)."""
    c = np.asarray(c, dtype=float)
    c_inv = inv_sl2(c)
    gf = g.fiber
    return SkewMap(g.freq, FuncFiber(lambda x: c_inv @ gf.mat(x) @ c, periodic=gf.periodic))


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrbitEstimate:
    value: float
    n_iter: int
    error_indicator: float

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not self.error_indicator >= 0.0:
            raise ValueError("error_indicator must be nonnegative")


def _require_iters(n_iter):
    n = int(n_iter)
    if n < 1000:
        raise ValueError("estimators need n_iter >= 1000")
    return n


def _circ_dist(a, b):
    d = (a - b) % 1.0
    return min(d, 1.0 - d)


def lyapunov(g: SkewMap, n_iter: int = 1_000_000, x0: float = 0.0) -> OrbitEstimate:
    """Lyapunov exponent from per-step renormalized vector growth.

    The estimate averages the log growth over the last half of the orbit;
    the error indicator compares it with the previous dyadic window.
    """
    n = _require_iters(n_iter)
    if isinstance(g.fiber, AMFiber):
        f = g.fiber
        s1, s2, s3, s4 = kernels.am_lyapunov_sums(
            f.energy, f.coupling, f.phase, g.freq_value, n, x0)
    else:
        s1, s2, s3, s4 = _lyapunov_sums_generic(g, n, x0)
    q1, q2, q3 = n // 4, n // 2, (3 * n) // 4
    value = (s4 - s2) / (n - q2)
    prev = (s2 - s1) / (q2 - q1)
    if not math.isfinite(value):
        raise FloatingPointError("non-finite growth encountered")
    return OrbitEstimate(value, n, abs(value - prev))


def _lyapunov_sums_generic(g: SkewMap, n: int, x0: float):
    v = np.array([1.0, 0.0])
    x = x0
    alpha = g.freq_value
    marks = {n // 4: 0.0, n // 2: 0.0, (3 * n) // 4: 0.0}
    acc = 0.0
    for k in range(n):
        m = g.fiber.mat(np.float64(x % 1.0 if g.fiber.periodic else x))
        v = m @ v
        gnorm = math.hypot(v[0], v[1])
        if not math.isfinite(gnorm) or gnorm == 0.0:
            raise FloatingPointError("non-finite fiber entry in orbit")
        acc += math.log(gnorm)
        v /= gnorm
        x += alpha
        if k + 1 in marks:
            marks[k + 1] = acc
    return marks[n // 4], marks[n // 2], marks[(3 * n) // 4], acc


def rotation_number(g: SkewMap, n_iter: int = 1_000_000,
                    x0: float = 0.0, theta0: float = 0.0) -> OrbitEstimate:
    """Fibered rotation number mod 1 of the projectivized skew map.

    The lift is tracked exactly: the cosine fiber factors into a quarter
    turn and a shear, and a general SL(2,R) step factors into its polar
    rotation and a positive symmetric part, each moving directions by less
    than a half turn without ambiguity.
    """
    n = _require_iters(n_iter)
    if isinstance(g.fiber, AMFiber):
        f = g.fiber
        tot_half, tot = kernels.am_rotation_sums(
            f.energy, f.coupling, f.phase, g.freq_value, n, x0, theta0)
    else:
        tot_half, tot = _rotation_sums_generic(g, n, x0, theta0)
    value = (tot / (TWO_PI * n)) % 1.0
    half = (tot_half / (TWO_PI * (n // 2))) % 1.0
    return OrbitEstimate(value, n, _circ_dist(value, half))


def _rotation_sums_generic(g: SkewMap, n: int, x0: float, theta0: float):
    v = np.array([math.cos(theta0), math.sin(theta0)])
    x = x0
    alpha = g.freq_value
    tot = 0.0
    tot_half = 0.0
    half = n // 2
    suspicious = 0
    for k in range(n):
        m = g.fiber.mat(np.float64(x % 1.0 if g.fiber.periodic else x))
        phi = math.atan2(m[1, 0] - m[0, 1], m[0, 0] + m[1, 1])
        if abs(phi) > math.pi - 0.05:
            suspicious += 1
        # symmetric positive polar part
        cp, sp = math.cos(phi), math.sin(phi)
        p = np.array([[cp * m[0, 0] + sp * m[1, 0], cp * m[0, 1] + sp * m[1, 1]],
                      [-sp * m[0, 0] + cp * m[1, 0], -sp * m[0, 1] + cp * m[1, 1]]])
        w = p @ v
        dot = float(v @ w)
        cross = float(v[0] * w[1] - v[1] * w[0])
        tot += phi + math.atan2(cross, dot)
        u = m @ v
        gnorm = math.hypot(u[0], u[1])
        if not math.isfinite(gnorm) or gnorm == 0.0:
            raise FloatingPointError("non-finite fiber entry in orbit")
        v = u / gnorm
        x += alpha
        if k + 1 == half:
            tot_half = tot
    if suspicious > max(10, n // 1000):
        raise BranchTrackingError(
            f"{suspicious} near-half-turn polar angles; lift unreliable")
    return tot_half, tot


def reversibility_defect(g: SkewMap, n_grid: int = 256) -> float:
    """Grid sup of |mat(G^{-1})(x) - S mat(G)(-x) S|.

    Vanishes exactly when G is conjugated to its inverse by (x, y) -> (-x, Sy).
    """
    w = g.freq_value
    xs = _defect_grid(g, n_grid, abs(w))
    lhs = _inv_batch(g.fiber.mat(xs - w))
    rhs = S_MAT @ g.fiber.mat(-xs) @ S_MAT
    return float(np.max(np.abs(lhs - rhs)))


def commutation_defect(f: SkewMap, g: SkewMap, n_grid: int = 256) -> float:
    """Grid sup distance between the fibers of f∘g and g∘f."""
    wf, wg = f.freq_value, g.freq_value
    xs = _defect_grid(g, n_grid, max(abs(wf), abs(wg)),
                      other=f)
    lhs = f.fiber.mat(xs + wg) @ g.fiber.mat(xs)
    rhs = g.fiber.mat(xs + wf) @ f.fiber.mat(xs)
    return float(np.max(np.abs(lhs - rhs)))


def _defect_grid(g: SkewMap, n_grid: int, margin: float, other: SkewMap | None = None):
    fibers = [g.fiber] + ([other.fiber] if other is not None else [])
    radii = [f.series.radius for f in fibers if isinstance(f, PolyFiber)]
    if radii:
        half = (min(radii) - margin) * (1.0 - 1e-9)
        if half <= 0:
            raise DomainError("shift too large for the series domain")
        return np.linspace(-half, half, n_grid)
    return np.linspace(0.0, 1.0, n_grid, endpoint=False)


def cocycle_power_norm(g: SkewMap, n: int, x0: float = 0.0) -> float:
    """log of the Frobenius norm of the n-step fiber product at x0."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(g.fiber, AMFiber):
        f = g.fiber
        return float(kernels.am_power_lognorms(
            f.energy, f.coupling, f.phase, g.freq_value,
            np.array([n], dtype=np.int64), x0)[0])
    q = np.eye(2)
    logscale = 0.0
    x = x0
    for _ in range(n):
        q = g.fiber.mat(np.float64(x % 1.0 if g.fiber.periodic else x)) @ q
        m = float(np.max(np.abs(q)))
        if m > 1e200:
            q /= m
            logscale += math.log(m)
        x += g.freq_value
    return logscale + 0.5 * math.log(float(np.sum(q * q)))


def cocycle_power_norms(g: SkewMap, ns, x0: float = 0.0):
    """Batched log norms along increasing powers (single orbit sweep)."""
    ns = np.asarray(sorted(int(n) for n in ns), dtype=np.int64)
    if isinstance(g.fiber, AMFiber):
        f = g.fiber
        return kernels.am_power_lognorms(f.energy, f.coupling, f.phase,
                                         g.freq_value, ns, x0)
    return np.array([cocycle_power_norm(g, int(n), x0) for n in ns])
