"""Exact 2x2 real-matrix arithmetic plus truncated Chebyshev series for
analytic SL(2,R)-valued matrix functions on a bounded interval [-r, r].

Matrices are plain (2, 2) float arrays.  A PolyMat stores the four entry
series in one coefficient tensor of shape (N+1, 2, 2) so that products,
affine argument changes, and constant conjugations stay vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.polynomial.chebyshev as ncheb

from .backend import resolve_dtype

DET_TOL = 1e-8
DEFAULT_DEGREE = 80
DEFAULT_RADIUS = 3.0
EVAL_GRID_POINTS = 65
TAIL_WARN_RATIO = 1e-6

S_MAT = np.array([[0.0, 1.0], [1.0, 0.0]])
IDENTITY = np.eye(2)


class DeterminantError(ValueError):
    """Raised when a matrix tagged SL(2) violates det = 1 within tolerance."""


class DomainError(ValueError):
    """Raised when an evaluation or affine substitution leaves [-r, r]."""


def mat_mul(left, right):
    return np.asarray(left) @ np.asarray(right)


def det2(m):
    return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


def inv_sl2(m, det_tol: float = DET_TOL):
    """Adjugate inverse of a determinant-1 matrix."""
    m = np.asarray(m)
    scale = max(1.0, float(np.max(np.abs(m))) ** 2)
    if abs(float(det2(m)) - 1.0) > det_tol * scale:
        raise DeterminantError(f"matrix determinant {det2(m)} is not 1 within {det_tol}")
    out = np.empty_like(m)
    out[0, 0] = m[1, 1]
    out[0, 1] = -m[0, 1]
    out[1, 0] = -m[1, 0]
    out[1, 1] = m[0, 0]
    return out


def exp_sigma_s(sigma: float, dtype=None):
    """exp(sigma*S) = [[cosh s, sinh s], [sinh s, cosh s]]."""
    dt = resolve_dtype(dtype)
    s = dt(sigma)
    ch, sh = np.cosh(s), np.sinh(s)
    return np.array([[ch, sh], [sh, ch]], dtype=dt)


def s_split(m):
    """Components of m in the eigenbasis of S (eigenvectors (1,1), (1,-1)).

    Returns (c_pp, c_pm, c_mp, c_mm).  Conjugation m -> e^{sS} m e^{-sS}
    multiplies c_pm by e^{2s} and c_mp by e^{-2s} and fixes the diagonal
    components, which is what the scaling normalization uses.
    """
    a, b = m[0, 0], m[0, 1]
    c, d = m[1, 0], m[1, 1]
    c_pp = 0.5 * (a + b + c + d)
    c_pm = 0.5 * (a - b + c - d)
    c_mp = 0.5 * (a + b - c - d)
    c_mm = 0.5 * (a - b - c + d)
    return c_pp, c_pm, c_mp, c_mm


# ---------------------------------------------------------------------------
# Chebyshev scaffolding
# ---------------------------------------------------------------------------

_matrix_cache: dict = {}


def _first_kind_points(n_pts: int, dtype):
    k = np.arange(n_pts, dtype=dtype)
    return np.cos(np.pi * (k + dtype(0.5)) / dtype(n_pts))


def _analysis_matrix(degree: int, dtype):
    """Map values at the N+1 first-kind points to Chebyshev coefficients."""
    key = ("analysis", degree, np.dtype(dtype).name)
    if key not in _matrix_cache:
        n = degree + 1
        k = np.arange(n, dtype=dtype)
        j = np.arange(n, dtype=dtype)
        w = np.cos(np.outer(j, np.pi * (k + dtype(0.5)) / dtype(n))) * (dtype(2) / dtype(n))
        w[0] *= dtype(0.5)
        w.flags.writeable = False
        _matrix_cache[key] = w
    return _matrix_cache[key]


def _affine_matrix(degree: int, a: float, b_over_r: float, dtype):
    """Coefficient-space operator for the substitution t -> a*t + b/r."""
    key = ("affine", degree, float(a), float(b_over_r), np.dtype(dtype).name)
    if key not in _matrix_cache:
        t = _first_kind_points(degree + 1, dtype)
        u = dtype(a) * t + dtype(b_over_r)
        v = ncheb.chebvander(u, degree).astype(dtype)
        op = _analysis_matrix(degree, dtype) @ v
        op.flags.writeable = False
        _matrix_cache[key] = op
    return _matrix_cache[key]


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ScalarSeries:
    """Truncated Chebyshev series on [-r, r].

    coeffs has length N+1; values are immutable after construction so the
    series can be shared freely across parallel work.
    """

    coeffs: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(np.atleast_1d(self.coeffs)))
        if not np.all(np.isfinite(self.coeffs.astype(float))):
            raise ValueError("series coefficients must be finite")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def eval(self, x):
        x = np.asarray(x, dtype=self.coeffs.dtype)
        if np.any(np.abs(x) > self.radius * (1 + 1e-12)):
            raise DomainError(f"evaluation point outside [-{self.radius}, {self.radius}]")
        return ncheb.chebval(x / self.coeffs.dtype.type(self.radius), self.coeffs)

    def tail(self, k: int) -> float:
        """Sum of |c_j| for j > k within the stored truncation."""
        return float(np.sum(np.abs(self.coeffs[k + 1:])))

    def norm1(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))


def _check_compatible(f: ScalarSeries, g: ScalarSeries):
    if f.degree != g.degree or f.radius != g.radius:
        raise DomainError("series must share degree and radius")


def series_add(f: ScalarSeries, g: ScalarSeries) -> ScalarSeries:
    _check_compatible(f, g)
    return ScalarSeries(f.coeffs + g.coeffs, f.radius)


def series_scale(f: ScalarSeries, c) -> ScalarSeries:
    return ScalarSeries(f.coeffs * f.coeffs.dtype.type(c), f.radius)


def series_mul(f: ScalarSeries, g: ScalarSeries) -> ScalarSeries:
    """Product truncated back to the shared degree."""
    _check_compatible(f, g)
    full = ncheb.chebmul(f.coeffs, g.coeffs)
    return ScalarSeries(full[: f.degree + 1], f.radius)


def series_from_callable(fn, degree: int = DEFAULT_DEGREE,
                         radius: float = DEFAULT_RADIUS, dtype=None) -> ScalarSeries:
    dt = resolve_dtype(dtype)
    t = _first_kind_points(degree + 1, dt)
    vals = np.asarray(fn(t * dt(radius)), dtype=dt)
    return ScalarSeries(_analysis_matrix(degree, dt) @ vals, float(radius))


@dataclass(frozen=True)
class PolyMat:
    """2x2 matrix of truncated Chebyshev series on a shared interval.

    coeffs has shape (N+1, 2, 2): coeffs[k] is the k-th Chebyshev
    coefficient matrix.
    """

    coeffs: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim != 3 or c.shape[1:] != (2, 2):
            raise ValueError("PolyMat coefficients must have shape (N+1, 2, 2)")
        object.__setattr__(self, "coeffs", _frozen(c))

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def dtype(self):
        return self.coeffs.dtype

    def entry(self, i: int, j: int) -> ScalarSeries:
        return ScalarSeries(self.coeffs[:, i, j], self.radius)

    def sup_norm(self) -> float:
        """Coefficient l1 bound on the sup of any entry over [-r, r]."""
        return float(np.max(np.sum(np.abs(self.coeffs), axis=0)))

    def tail_ratio(self, margin: int = 10) -> float:
        """max over entries of tail(N - margin) / l1-norm, the drift monitor."""
        k = max(self.degree - margin, 0)
        tails = np.sum(np.abs(self.coeffs[k + 1:]), axis=0)
        norms = np.sum(np.abs(self.coeffs), axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(norms > 0, tails / norms, 0.0)
        return float(np.max(ratio))

    @property
    def drift_warning(self) -> bool:
        return self.tail_ratio() > TAIL_WARN_RATIO

    def grid(self, n_points: int = EVAL_GRID_POINTS):
        return _first_kind_points(n_points, self.dtype.type) * self.dtype.type(self.radius)

    def det_defect(self, n_points: int = EVAL_GRID_POINTS) -> float:
        """Grid-sup of |det(M(x)) - 1| over the Chebyshev evaluation grid."""
        vals = polymat_eval(self, self.grid(n_points))
        det = vals[..., 0, 0] * vals[..., 1, 1] - vals[..., 0, 1] * vals[..., 1, 0]
        return float(np.max(np.abs(det - 1.0)))


def polymat_from_constant(m, degree: int = DEFAULT_DEGREE,
                          radius: float = DEFAULT_RADIUS, dtype=None) -> PolyMat:
    dt = resolve_dtype(dtype)
    c = np.zeros((degree + 1, 2, 2), dtype=dt)
    c[0] = np.asarray(m, dtype=dt)
    return PolyMat(c, float(radius))


def polymat_from_callable(fn, degree: int = DEFAULT_DEGREE,
                          radius: float = DEFAULT_RADIUS, dtype=None) -> PolyMat:
    """Interpolate a matrix-valued function; fn(x) -> (..., 2, 2) for array x."""
    dt = resolve_dtype(dtype)
    t = _first_kind_points(degree + 1, dt)
    vals = np.asarray(fn(t * dt(radius)), dtype=dt)
    if vals.shape != (degree + 1, 2, 2):
        raise ValueError("callable must return shape (len(x), 2, 2)")
    coeffs = np.tensordot(_analysis_matrix(degree, dt), vals, axes=1)
    return PolyMat(coeffs, float(radius))


def polymat_eval(m: PolyMat, x):
    """Entrywise Clenshaw evaluation; returns (2, 2) or (len(x), 2, 2)."""
    x = np.asarray(x, dtype=m.dtype)
    if np.any(np.abs(x) > m.radius * (1 + 1e-12)):
        raise DomainError(f"evaluation point outside [-{m.radius}, {m.radius}]")
    t = x / m.dtype.type(m.radius)
    vals = ncheb.chebval(t, m.coeffs)  # shape (2, 2) + t.shape
    if t.ndim == 0:
        return vals
    return np.moveaxis(vals, -1, 0)


def polymat_mul(left: PolyMat, right: PolyMat) -> PolyMat:
    """Matrix product, every entry truncated back to the shared degree."""
    if left.degree != right.degree or left.radius != right.radius:
        raise DomainError("operands must share degree and radius")
    n = left.degree + 1
    out = np.zeros((n, 2, 2), dtype=np.result_type(left.dtype, right.dtype))
    for i in range(2):
        for j in range(2):
            acc = None
            for k in range(2):
                term = ncheb.chebmul(left.coeffs[:, i, k], right.coeffs[:, k, j])
                acc = term if acc is None else ncheb.chebadd(acc, term)
            out[:, i, j] = acc[:n]
    return PolyMat(out, left.radius)


def polymat_inv(m: PolyMat, det_tol: float = DET_TOL, check: bool = True) -> PolyMat:
    """Pointwise adjugate; valid for SL(2)-tagged matrices."""
    if check:
        defect = m.det_defect()
        scale = max(1.0, m.sup_norm() ** 2)
        if defect > det_tol * scale:
            raise DeterminantError(f"det defect {defect:.3e} exceeds tolerance")
    c = m.coeffs
    out = np.empty_like(c)
    out[:, 0, 0] = c[:, 1, 1]
    out[:, 0, 1] = -c[:, 0, 1]
    out[:, 1, 0] = -c[:, 1, 0]
    out[:, 1, 1] = c[:, 0, 0]
    return PolyMat(out, m.radius)


def polymat_conj(m: PolyMat, c_mat) -> PolyMat:
    """Constant conjugation C^{-1} M(x) C for any invertible C."""
    c = np.asarray(c_mat, dtype=m.dtype)
    det = det2(c)
    if abs(float(det)) < 1e-12:
        raise DeterminantError("conjugating matrix is singular")
    c_inv = np.array([[c[1, 1], -c[0, 1]], [-c[1, 0], c[0, 0]]], dtype=m.dtype) / det
    out = np.einsum("ij,njk,kl->nil", c_inv, m.coeffs, c)
    return PolyMat(out, m.radius)


def polymat_rescale(m: PolyMat, a: float, b: float) -> PolyMat:
    """Affine substitution: result(x) = m(a*x + b), exact up to rounding."""
    if abs(a) * m.radius + abs(b) > m.radius * (1 + 1e-12):
        raise DomainError(
            f"affine image |{a}|*{m.radius} + |{b}| leaves [-{m.radius}, {m.radius}]")
    op = _affine_matrix(m.degree, float(a), float(b) / m.radius, m.dtype.type)
    return PolyMat(np.tensordot(op, m.coeffs, axes=1), m.radius)
