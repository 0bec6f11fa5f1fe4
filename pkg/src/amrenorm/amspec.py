"""Almost Mathieu family: rational band spectra, integrated density of
states, gap labels, butterfly datasets, and critical-energy location at the
inverse golden mean.

For rational frequency p/q the spectrum is the set of energies where the
interval [min_theta D(theta, E), max_theta D(theta, E)] of q-step transfer
traces meets [-2, 2].  The extremal phases are located numerically (a scan
of q+1 equally spaced values plus golden-section refinement); the extremal
traces are then degree-q polynomials in E, so their band edges come from a
Chebyshev interpolant's colleague-matrix roots, polished by bisection on
the true trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .arith import ALPHA_STAR, GoldenInt
from .cocycle import AMFiber, SkewMap, am_map, rotation_number
from .sl2 import DEFAULT_DEGREE, DEFAULT_RADIUS, polymat_from_callable

GOLDEN_RATIO = 0.5 + 0.5 * math.sqrt(5.0)


class BandError(RuntimeError):
    """Raised when band bracketing or classification fails."""


class EnergyInBandError(ValueError):
    """Raised when the density of states is requested inside a band."""


class BracketError(ValueError):
    """Raised when a rotation-number target cannot be bracketed."""


@dataclass(frozen=True)
class AMParams:
    """Energy, coupling, phase, and frequency of one cosine-potential operator."""

    energy: float
    coupling: float
    phase: float = 0.0
    freq: object = None

    def __post_init__(self):
        if self.coupling < 0:
            raise ValueError("coupling must be nonnegative")
        if isinstance(self.freq, Fraction):
            if not (0 <= self.freq < 1) and self.freq != 1:
                object.__setattr__(self, "freq", self.freq % 1)


@dataclass(frozen=True)
class RotTarget:
    """Target fibered rotation number in [0, 1/2]."""

    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 0.5:
            raise ValueError("rotation-number target must lie in [0, 1/2]")


@dataclass(frozen=True)
class BandSet:
    """Ordered closed bands with an integer label per gap between them.

    labels[i] is the index k of the gap between bands[i] and bands[i+1],
    solving k*p = r (mod q) with r = i + 1 bands below the gap.
    """

    p: int
    q: int
    bands: tuple
    labels: tuple

    def __post_init__(self):
        if len(self.labels) != max(len(self.bands) - 1, 0):
            raise ValueError("need one label per interior gap")
        for (lo, hi) in self.bands:
            if not lo <= hi:
                raise ValueError("band endpoints out of order")
        for (a, b), (c, d) in zip(self.bands, self.bands[1:]):
            if c < b - 1e-12:
                raise ValueError("bands must be disjoint up to touching")
        for i, k in enumerate(self.labels):
            if (k * self.p - (i + 1)) % self.q != 0:
                raise ValueError("gap label violates the index congruence")

    def gaps(self):
        return [(self.bands[i][1], self.bands[i + 1][0])
                for i in range(len(self.bands) - 1)]

    def total_measure(self) -> float:
        return sum(hi - lo for lo, hi in self.bands)


def am_transfer(params: AMParams):
    """Closed-form transfer fiber; .as_polymat gives the series form."""
    return AMFiber(params.energy, params.coupling, params.phase)


def am_transfer_polymat(params: AMParams, degree: int = DEFAULT_DEGREE,
                        radius: float = DEFAULT_RADIUS, dtype=None):
    fiber = am_transfer(params)
    return polymat_from_callable(lambda x: fiber.mat(x), degree, radius, dtype)


def am_pair_maps(energy: float, coupling: float = 1.0):
    """The commuting reversible seed pair: F = (1, I), G = (alpha*, A).

    The cosine phase is alpha*/2, which makes G conjugate to its inverse
    under (x, y) -> (-x, Sy).
    """
    f = SkewMap(GoldenInt(1, 0), _identity_fiber())
    g = am_map(energy, coupling, phase=ALPHA_STAR / 2.0)
    return f, g


def _identity_fiber():
    from .cocycle import ConstFiber
    return ConstFiber(np.eye(2))


# ---------------------------------------------------------------------------
# Rational spectra via extremal discriminants
# ---------------------------------------------------------------------------

def _trace_batch(p: int, q: int, lam: float, xi: float, thetas, energies):
    """Trace of the q-step transfer product, shape (n_theta, n_E)."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    th = thetas[:, None]
    es = energies[None, :]
    a11 = np.ones(np.broadcast_shapes(th.shape, es.shape))
    a12 = np.zeros_like(a11)
    a21 = np.zeros_like(a11)
    a22 = np.ones_like(a11)
    alpha = p / q
    for n in range(q):
        t = es - 2.0 * lam * np.cos(2.0 * np.pi * (th + n * alpha + xi))
        b11 = t * a11 - a21
        b12 = t * a12 - a22
        a21, a22 = a11, a12
        a11, a12 = b11, b12
    return a11 + a22


def _golden_refine(fn, lo, hi, iters: int = 60):
    """Golden-section minimizer of a scalar function on [lo, hi]."""
    inv = 1.0 / GOLDEN_RATIO
    a, b = lo, hi
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def _probe_energies(p, q, lam, xi, e_max, n_grid: int = 257, n_probes: int = 3):
    """Energies where |trace| is small, so phase extrema are well conditioned."""
    grid = np.linspace(-e_max, e_max, n_grid)
    mag = np.abs(_trace_batch(p, q, lam, xi, [0.0], grid)[0])
    order = np.argsort(mag)
    probes = []
    for idx in order:
        e = float(grid[idx])
        if all(abs(e - other) > 0.15 for other in probes):
            probes.append(e)
        if len(probes) == n_probes:
            break
    return probes or [0.0]


def _extremal_phases(p, q, lam, xi, sample_energies):
    """Phases minimizing and maximizing the trace, checked across energies.

    The trace is 1/q-periodic in the phase; q+1 equally spaced samples
    bracket each extremum, golden-section refines it.  Returns
    (theta_min, theta_max, consistent) where consistent reports whether the
    extremizers agree across the probe energies.
    """
    period = 1.0 / q
    scan = np.linspace(0.0, period, q + 2)[:-1]
    results = []
    for e in sample_energies:
        tr = _trace_batch(p, q, lam, xi, scan, [e])[:, 0]
        spread = float(np.max(tr) - np.min(tr))
        if spread < 1e-9 * max(1.0, float(np.max(np.abs(tr)))):
            # phase-independent trace: any extremizer works
            results.append((0.0, 0.0))
            continue
        step = period / (q + 1)
        i_min = int(np.argmin(tr))
        i_max = int(np.argmax(tr))
        f_scalar = lambda th: float(_trace_batch(p, q, lam, xi, [th], [e])[0, 0])
        th_min = _golden_refine(f_scalar, scan[i_min] - step, scan[i_min] + step)
        th_max = _golden_refine(lambda th: -f_scalar(th),
                                scan[i_max] - step, scan[i_max] + step)
        results.append((th_min % period, th_max % period))
    th_min0, th_max0 = results[0]
    tol = 2e-5 * period
    consistent = all(
        min(abs(a - th_min0) % period, period - abs(a - th_min0) % period) < tol
        and min(abs(b - th_max0) % period, period - abs(b - th_max0) % period) < tol
        for a, b in results[1:])
    return th_min0, th_max0, consistent


def _extremal_traces(p, q, lam, xi, energies, thetas_minmax=None, refine_each=False):
    """(min trace, max trace) over theta at each energy."""
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if refine_each or thetas_minmax is None:
        period = 1.0 / q
        scan = np.linspace(0.0, period, q + 2)[:-1]
        tr = _trace_batch(p, q, lam, xi, scan, energies)
        lo = np.empty(len(energies))
        hi = np.empty(len(energies))
        step = period / (q + 1)
        for j, e in enumerate(energies):
            i_min = int(np.argmin(tr[:, j]))
            i_max = int(np.argmax(tr[:, j]))
            f = lambda th: float(_trace_batch(p, q, lam, xi, [th], [e])[0, 0])
            th_min = _golden_refine(f, scan[i_min] - step, scan[i_min] + step, 45)
            th_max = _golden_refine(lambda th: -f(th),
                                    scan[i_max] - step, scan[i_max] + step, 45)
            lo[j] = f(th_min)
            hi[j] = f(th_max)
        return lo, hi
    th_min, th_max = thetas_minmax
    tr = _trace_batch(p, q, lam, xi, [th_min, th_max], energies)
    return tr[0], tr[1]


def _bloch_matrix(p: int, q: int, lam: float, xi: float, theta: float, anti: bool):
    """q-periodic Bloch matrix whose eigenvalues solve trace = +2 (periodic)
    or trace = -2 (antiperiodic) at the given phase."""
    n = np.arange(q)
    v = 2.0 * lam * np.cos(2.0 * np.pi * (n * (p / q) + theta + xi))
    h = np.diag(v)
    corner = -1.0 if anti else 1.0
    if q == 1:
        h[0, 0] += 2.0 * corner
        return h
    for i in range(q - 1):
        h[i, i + 1] += 1.0
        h[i + 1, i] += 1.0
    h[0, q - 1] += corner
    h[q - 1, 0] += corner
    return h


def bands_rational(p: int, q: int, lam: float, xi: float = 0.0) -> BandSet:
    """Band spectrum of the cosine-potential operator at frequency p/q.

    Edges are the roots of (min-trace - 2) and (max-trace + 2).  Stable
    brackets for all 2q roots come from the periodic and antiperiodic Bloch
    eigenvalues at the extremal phases; each root is then polished by
    bisection on the true extremal trace.  Tangencies at E = 0 (even q)
    split two touching bands.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    p = p % q if q > 1 else 0
    if math.gcd(p, q) != 1 and not (p == 0 and q == 1):
        raise ValueError("p/q must be reduced")

    e_max = 2.0 + 2.0 * lam
    enclosure = (-e_max - 0.25, e_max + 0.25)
    probes = _probe_energies(p, q, lam, xi, e_max)
    th_min, th_max, consistent = _extremal_phases(p, q, lam, xi, probes)

    def trace_min_vec(es):
        if consistent:
            return _trace_batch(p, q, lam, xi, [th_min], es)[0]
        return _extremal_traces(p, q, lam, xi, es, refine_each=True)[0]

    def trace_max_vec(es):
        if consistent:
            return _trace_batch(p, q, lam, xi, [th_max], es)[0]
        return _extremal_traces(p, q, lam, xi, es, refine_each=True)[1]

    lower_seeds = np.linalg.eigvalsh(_bloch_matrix(p, q, lam, xi, th_min, anti=False))
    upper_seeds = np.linalg.eigvalsh(_bloch_matrix(p, q, lam, xi, th_max, anti=True))

    a_roots = np.sort(_polish_edges_vec(lambda es: trace_min_vec(es) - 2.0, lower_seeds))
    b_roots = np.sort(_polish_edges_vec(lambda es: trace_max_vec(es) + 2.0, upper_seeds))
    if len(a_roots) != q or len(b_roots) != q:
        raise BandError(f"expected {q} edge roots per family, got "
                        f"{len(a_roots)} and {len(b_roots)}")
    if q % 2 == 0:
        # E -> -E symmetry: a tangency near zero is exactly at zero, and the
        # residual split only reflects phase-refinement rounding
        for roots in (a_roots, b_roots):
            j = np.searchsorted(roots, 0.0)
            if 0 < j < q and roots[j - 1] > -1e-7 and roots[j] < 1e-7:
                roots[j - 1] = roots[j] = 0.0

    # Scanning downward from E = +inf the membership boundary alternates in
    # blocks: top of band q from the min trace hitting +2, then two max-trace
    # crossings of -2, then two min-trace crossings of +2, and so on.  Band j
    # (1-indexed from below) therefore reads [b_j, a_j] when q - j is even
    # and [a_j, b_j] when it is odd.  Touching bands appear as degenerate
    # root pairs and need no special handling.
    bands = []
    for j in range(1, q + 1):
        lo, hi = ((b_roots[j - 1], a_roots[j - 1]) if (q - j) % 2 == 0
                  else (a_roots[j - 1], b_roots[j - 1]))
        if lo > hi:
            if lo - hi > 1e-9:
                raise BandError(f"band {j} edges out of order: [{lo}, {hi}]")
            lo = hi = 0.5 * (lo + hi)
        bands.append((float(lo), float(hi)))
    for (a, b), (c, d) in zip(bands, bands[1:]):
        if c < b - 1e-9:
            raise BandError("band intervals overlap; edge classification failed")
    bands = _clip_overlaps(bands)
    if not (enclosure[0] < bands[0][0] and bands[-1][1] < enclosure[1]):
        raise BandError("spectrum reaches the a priori enclosure boundary")

    labels = tuple(gap_label(p if q > 1 else 1, q, r)
                   for r in range(1, len(bands)))
    return BandSet(p, q, tuple(bands), labels)


def _clip_overlaps(bands):
    """Remove sub-nanoscale overlaps left by edge rounding."""
    out = [bands[0]]
    for lo, hi in bands[1:]:
        plo, phi = out[-1]
        if lo < phi:
            mid = 0.5 * (lo + phi)
            out[-1] = (plo, mid)
            lo = mid
        out.append((lo, hi))
    return out


def _polish_edges_vec(fn_vec, seeds, iters: int = 55, width: float = 1e-7):
    """Lockstep bisection of edge seeds against a vectorized residual.

    Each seed is an eigenvalue of a symmetric matrix and already sits within
    machine precision of a root; the bisection ties the final value to the
    discriminant itself.  A seed whose tight bracket shows no sign change
    belongs to a (near-)degenerate root pair and is kept as-is.
    """
    seeds = np.asarray(seeds, dtype=float)
    out = seeds.copy()
    lo = seeds - width
    hi = seeds + width
    flo = fn_vec(lo)
    fhi = fn_vec(hi)
    have = flo * fhi <= 0.0
    if np.any(have):
        blo, bhi, bflo = lo[have], hi[have], flo[have]
        for _ in range(iters):
            mid = 0.5 * (blo + bhi)
            fm = fn_vec(mid)
            left = bflo * fm <= 0.0
            bhi = np.where(left, mid, bhi)
            blo = np.where(left, blo, mid)
            bflo = np.where(left, bflo, fm)
        out[have] = 0.5 * (blo + bhi)
    return out


def gap_label(p: int, q: int, r: int) -> int:
    """Unique k with k*p = r (mod q) and |k| <= q/2, ties broken positive."""
    if q == 1:
        return 0
    if not 0 < r < q:
        raise ValueError("r must satisfy 0 < r < q")
    k0 = (r * pow(p, -1, q)) % q
    return k0 if 2 * k0 <= q else k0 - q


def ids_rational(p: int, q: int, lam: float, energy: float,
                 band_set: BandSet | None = None) -> Fraction:
    """Integrated density of states r/q for an energy in a gap or outside."""
    bs = band_set if band_set is not None else bands_rational(p, q, lam)
    r = 0
    for lo, hi in bs.bands:
        if lo < energy < hi:
            raise EnergyInBandError(f"E={energy} lies inside band [{lo}, {hi}]")
        if hi <= energy:
            r += 1
    return Fraction(r, q)


def reduced_fractions(q_max: int):
    """All reduced p/q with q <= q_max, 0 <= p < q (p=0 only for q=1)."""
    out = [(0, 1)]
    for q in range(2, q_max + 1):
        for p in range(1, q):
            if math.gcd(p, q) == 1:
                out.append((p, q))
    return out


def butterfly(q_max: int, lam: float, workers: int = 1):
    """BandSets for every reduced p/q with q <= q_max, in canonical order."""
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    cells = reduced_fractions(q_max)
    if workers > 1:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(workers) as pool:
            results = pool.starmap(_butterfly_cell, [(p, q, lam) for p, q in cells])
    else:
        results = [_butterfly_cell(p, q, lam) for p, q in cells]
    return {(p, q): bs for (p, q), bs in zip(cells, results)}


def _butterfly_cell(p, q, lam):
    return bands_rational(p, q, lam)


def butterfly_rows(band_sets: dict):
    """Flatten a butterfly into (p, q, band_index, lo, hi, gap_label_below) rows.

    gap_label_below is the label of the gap under the band; 0 under the
    lowest band (the region below the spectrum carries index 0).
    """
    rows = []
    for (p, q) in sorted(band_sets, key=lambda t: (t[1], t[0])):
        bs = band_sets[(p, q)]
        for i, (lo, hi) in enumerate(bs.bands):
            label = 0 if i == 0 else bs.labels[i - 1]
            rows.append((p, q, i + 1, lo, hi, label))
    return rows


# ---------------------------------------------------------------------------
# Critical energies from the rotation number
# ---------------------------------------------------------------------------

def _rho(e, lam, n_iter):
    est = rotation_number(am_map(e, lam, phase=ALPHA_STAR / 2.0), n_iter)
    return est


def find_critical_energy(target, lam: float = 1.0, tol: float = 1e-10,
                         n_iter_max: int = 30_000_000, bias: float | None = None,
                         trace: list | None = None) -> float:
    """Energy whose fibered rotation number matches the target.

    The rotation number decreases from 1/2 (below the spectrum) to 0 (above
    it); for a target t in (0, 1/2) the bisection tracks the upper edge of
    the level set {rho >= t}, using the fixed decision bias rho >= t - bias
    so that a constant level stretch (a gap) resolves to its top edge.  The
    boundary target 1/2 is read as the upper edge of {rho > 0}, the top of
    the spectrum, matching the half-integer identification of rotation
    numbers at the spectral edge (the density of states pins 2*rho only mod
    1).  Iteration counts grow as the bracket shrinks so the estimator
    noise falls below the bias.
    """
    rho_t = target.rho if isinstance(target, RotTarget) else float(target)
    if not 0.0 < rho_t <= 0.5:
        raise BracketError("target must lie in (0, 1/2]")
    if tol < 1e-14:
        raise ValueError("tol below attainable resolution")

    edge_mode = rho_t == 0.5
    if bias is None:
        bias = 2e-6 if edge_mode else 1e-5
    lo = -2.0 - 2.0 * lam - 0.5
    hi = 2.0 + 2.0 * lam + 0.5

    def predicate(e, n_iter):
        est = _rho(e, lam, n_iter)
        if trace is not None:
            trace.append((e, est.value, n_iter))
        # above the spectrum the estimator noise is one-sided positive, so
        # the decision bias can never sit below the current noise floor
        eff_bias = max(bias, 60.0 / n_iter)
        if edge_mode:
            return est.value > eff_bias
        return est.value >= rho_t - eff_bias

    def schedule(width):
        # estimator noise ~ 3/n must sit below the rotation-number contrast
        # at the current bracket scale (Hoelder-continuous level sets)
        n = int(4e3 / max(width, 1e-13) ** 0.45)
        return max(20_000, min(n_iter_max, n))

    n0 = schedule(1.0)
    if not predicate(lo, n0):
        raise BracketError("target exceeds the rotation number below the spectrum")
    if predicate(hi, n0):
        raise BracketError("target below the rotation number above the spectrum")

    while hi - lo > tol:
        width = hi - lo
        mid = 0.5 * (lo + hi)
        if predicate(mid, schedule(width)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
