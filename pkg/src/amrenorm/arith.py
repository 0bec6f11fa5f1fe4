"""Integer and golden-mean arithmetic.

Fibonacci numbers, Pisano periods, exact arithmetic in Z[alpha] for the
inverse golden mean alpha = (sqrt(5)-1)/2, the hyperbolic torus map acting
on rotation vectors, and the quartic polynomials whose real roots encode
the scaling constants of the renormalization fixed points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

ALPHA_STAR = (math.sqrt(5.0) - 1.0) / 2.0

# Monic quartics tied to the unstable multipliers and y-scaling factors.
P3 = (1.0, -30.0, -24.0, -10.0, -1.0)
P6 = (1.0, -196.0, -58.0, -4.0, 1.0)
Q3 = (1.0, -2.0, -2.0, -2.0, 1.0)
Q6 = (1.0, -8.0, -2.0, -8.0, 1.0)
# Auxiliary quartics satisfied by mu1^(1/3) (three-step) and mu1^(1/2) (six-step).
X3 = (1.0, -3.0, 0.0, -1.0, -1.0)
X6 = (1.0, -14.0, 0.0, -2.0, -1.0)


@dataclass(frozen=True)
class GoldenInt:
    """Element a + b*alpha of the ring Z[alpha], alpha = (sqrt(5)-1)/2.

    Closed under multiplication (alpha^2 = 1 - alpha) and under division by
    alpha (1/alpha = 1 + alpha), so skew-map frequencies stay exact through
    arbitrarily many shift and scaling steps.
    """

    a: int = 0
    b: int = 0

    def __add__(self, other):
        return GoldenInt(self.a + other.a, self.b + other.b)

    def __sub__(self, other):
        return GoldenInt(self.a - other.a, self.b - other.b)

    def __neg__(self):
        return GoldenInt(-self.a, -self.b)

    def __mul__(self, other):
        if isinstance(other, int):
            return GoldenInt(self.a * other, self.b * other)
        # (a + b al)(c + d al), al^2 = 1 - al
        a, b, c, d = self.a, self.b, other.a, other.b
        return GoldenInt(a * c + b * d, a * d + b * c - b * d)

    __rmul__ = __mul__

    def times_alpha(self):
        # (a + b al) al = b + (a - b) al
        return GoldenInt(self.b, self.a - self.b)

    def div_alpha(self):
        # 1/al = 1 + al, so (a + b al)/al = (a + b) + a al
        return GoldenInt(self.a + self.b, self.a)

    def div_alpha_pow(self, n: int):
        g = self
        for _ in range(n):
            g = g.div_alpha()
        return g

    def __float__(self):
        return self.a + self.b * ALPHA_STAR

    @property
    def value(self) -> float:
        return float(self)


ONE = GoldenInt(1, 0)
ALPHA = GoldenInt(0, 1)


def alpha_power(n: int) -> GoldenInt:
    """alpha^n as an exact element of Z[alpha] (n >= 0)."""
    g = ONE
    for _ in range(n):
        g = g.times_alpha()
    return g


def fibonacci(n: int) -> int:
    """n-th entry of 1, 1, 2, 3, 5, 8, ... (exact integer, n >= 0)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    a, b = 1, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def pisano(n: int) -> int:
    """Fundamental period of the Fibonacci sequence modulo n (n >= 2)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    a, b = 0, 1
    for k in range(1, 6 * n * n + 1):
        a, b = b, (a + b) % n
        if a == 0 and b == 1:
            return k
    raise RuntimeError(f"no Pisano period found for n={n}")  # unreachable


def u_power_mod(ell: int, n: int):
    """U^ell mod n for U = [[0, 1], [1, -1]], as a 2x2 integer tuple."""
    m = ((1, 0), (0, 1))
    u = ((0, 1), (1, n - 1))
    for _ in range(ell):
        m = (
            (
                (m[0][0] * u[0][0] + m[0][1] * u[1][0]) % n,
                (m[0][0] * u[0][1] + m[0][1] * u[1][1]) % n,
            ),
            (
                (m[1][0] * u[0][0] + m[1][1] * u[1][0]) % n,
                (m[1][0] * u[0][1] + m[1][1] * u[1][1]) % n,
            ),
        )
    return m


@dataclass(frozen=True)
class RotVec:
    """Pair of fibered rotation numbers, reduced mod 1, kept exact."""

    rho_f: Fraction
    rho_g: Fraction

    def __post_init__(self):
        object.__setattr__(self, "rho_f", self.rho_f % 1)
        object.__setattr__(self, "rho_g", self.rho_g % 1)

    @staticmethod
    def of(rho_f, rho_g) -> "RotVec":
        try:
            return RotVec(Fraction(rho_f), Fraction(rho_g))
        except (ValueError, TypeError) as exc:
            raise ValueError("rotation vector entries must be rational") from exc


def torus_step(v: RotVec) -> RotVec:
    """One step of the hyperbolic torus map: (f, g) -> (g, f - g) mod 1."""
    return RotVec(v.rho_g, (v.rho_f - v.rho_g) % 1)


def torus_step_inverse(v: RotVec) -> RotVec:
    return RotVec((v.rho_f + v.rho_g) % 1, v.rho_f)


def orbit_period(v: RotVec) -> int:
    """Exact least period of v under torus_step."""
    if not isinstance(v.rho_f, Fraction) or not isinstance(v.rho_g, Fraction):
        raise ValueError("orbit_period requires exact rational entries")
    n = math.lcm(v.rho_f.denominator, v.rho_g.denominator)
    w = torus_step(v)
    for k in range(1, 6 * n * n + 2):
        if w == v:
            return k
        w = torus_step(w)
    raise RuntimeError("orbit did not close")  # unreachable for rationals


@dataclass(frozen=True)
class PolySpec:
    """Monic real quartic given by its coefficient list, leading term first."""

    coefficients: tuple

    def __post_init__(self):
        if len(self.coefficients) != 5:
            raise ValueError("expected a quartic (5 coefficients)")
        if self.coefficients[0] != 1.0:
            raise ValueError("polynomial must be monic")

    def __call__(self, z):
        acc = 0.0
        for c in self.coefficients:
            acc = acc * z + c
        return acc


def real_roots(poly, scan_points: int = 20000, tol: float = 1e-13):
    """All real roots of a monic quartic, by sign scan plus Brent refinement.

    Returns a sorted list (possibly empty).  Roots are polished to ~1e-12
    relative accuracy; tangential (double) roots are not resolved, which is
    fine for the quartics used here (their real roots are simple).
    """
    coeffs = poly.coefficients if isinstance(poly, PolySpec) else tuple(poly)
    if coeffs[0] != 1.0:
        raise ValueError("polynomial must be monic")

    def f(z):
        acc = 0.0
        for c in coeffs:
            acc = acc * z + c
        return acc

    bound = 1.0 + max(abs(c) for c in coeffs[1:])
    grid = np.linspace(-bound, bound, scan_points)
    vals = np.polyval(coeffs, grid)
    roots = []
    sign = np.sign(vals)
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    for i in idx:
        r = brentq(f, grid[i], grid[i + 1], xtol=tol, rtol=8.0 * np.finfo(float).eps)
        roots.append(r)
    for i in np.nonzero(vals == 0.0)[0]:
        roots.append(float(grid[i]))
    return sorted(roots)


def largest_real_root(poly) -> float:
    roots = real_roots(poly)
    if not roots:
        raise ValueError("polynomial has no real roots")
    return roots[-1]


def constants() -> dict:
    """Closed-form golden-mean constants plus root-derived scaling factors.

    c3 and c6 are half the inverse hyperbolic cosines of 1/alpha and
    1/alpha^3; mu1 values are the largest real roots of the quartics P3, P6;
    tau values follow from ell*log(1/alpha)/log(mu1).
    """
    al = ALPHA_STAR
    c3 = 0.5 * math.acosh(1.0 / al)
    c6 = 0.5 * math.acosh(1.0 / al**3)
    c12 = 0.5 * math.acosh(1.0 / al**6)
    mu1_3 = largest_real_root(P3)
    mu1_6 = largest_real_root(P6)
    log_inv_alpha = -math.log(al)
    return {
        "alpha_star": al,
        "c3": c3,
        "c6": c6,
        "c12": c12,
        "e2c3": math.exp(2.0 * c3),
        "e2c6": math.exp(2.0 * c6),
        "mu1_3": mu1_3,
        "mu1_6": mu1_6,
        "mu2_3": al**-3,
        "mu2_6": al**-6,
        "tau3": 3.0 * log_inv_alpha / math.log(mu1_3),
        "tau6": 6.0 * log_inv_alpha / math.log(mu1_6),
    }
