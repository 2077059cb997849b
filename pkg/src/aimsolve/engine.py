"""Asymptotic iteration for the coupled first-order system

    phi1' = a0 phi1 + b0 phi2,    phi2' = c0 phi2 + d0 phi1.

Differentiating n times gives phi1^(n+1) = a_n phi1 + b_n phi2 and
phi2^(n+1) = c_n phi2 + d_n phi1 with

    a_n = a0 a_{n-1} + a_{n-1}' + d0 b_{n-1}
    b_n = b0 a_{n-1} + b_{n-1}' + c0 b_{n-1}
    c_n = c0 c_{n-1} + c_{n-1}' + b0 d_{n-1}
    d_n = d0 c_{n-1} + d_{n-1}' + a0 d_{n-1}

Eigenvalues are the energies where the ratios b_n/a_n and d_n/c_n stop
changing, i.e. the zeros of

    delta1 = b_{n-1} a_n - a_{n-1} b_n,    delta2 = d_{n-1} c_n - c_{n-1} d_n

at the expansion point.

Two evaluation routes share the tracking logic.  ``method="polynomial"``
carries E symbolically (``iterate``/``delta``) and roots the resulting
polynomials.  ``method="pointwise"`` (the default) runs the recurrence at
sampled energies through the compiled kernel; it computes the same
delta(E) but without forming high-degree monomial coefficients, which lose
all significant digits for the upper states after ~15 levels.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson

from . import kernels
from .algebra import XSeries, series_at_x0, series_diff, series_mul
from .errors import (
    DecoupledSystem,
    GammaSingular,
    NoConvergenceWarning,
    OrderExhausted,
    PoleOnGrid,
    SeriesMismatch,
)
from .rootfind import (
    RootWindow,
    merge_close,
    real_roots,
    refine_brackets,
    sign_change_brackets,
    subdivide,
)

# |delta| / (|b_{n-1} a_n| + |a_{n-1} b_n|) below this is rounding noise; the
# recurrence runs in long double (epsilon 1.1e-19)
NOISE_FLOOR = 1e-18


@dataclass(frozen=True)
class ExactCoefficients:
    """Closed-form coefficient functions of the physical coordinate.

    ``a0`` .. ``d0`` are called as ``f(x, E)`` with ``x`` an array.  Pole
    locations come from ``poles`` when given, otherwise from the real
    sign changes of the E-free ``denominators``.
    """

    a0: Callable
    b0: Callable
    c0: Callable
    d0: Callable
    poles: Optional[tuple] = None
    denominators: tuple = ()

    def poles_in(self, lo, hi, samples=None):
        if self.poles is not None:
            return sorted(float(p) for p in self.poles if lo <= p <= hi)
        xs = np.linspace(lo, hi, 4001)
        if samples is not None:
            s = np.asarray(samples, dtype=float)
            mids = 0.5 * (s[1:] + s[:-1])
            xs = np.unique(np.concatenate([xs, s, mids]))
        found = []
        for den in self.denominators:
            v = np.asarray(den(xs), dtype=float) * np.ones_like(xs)
            found.extend(xs[v == 0.0])
            idx = sign_change_brackets(xs, v)
            idx = idx[(v[idx] != 0) & (v[idx + 1] != 0)]
            if idx.size:
                found.extend(refine_brackets(den, xs[idx], xs[idx + 1], 1e-13))
        # coefficients usually share a denominator
        return [float(p) for p in merge_close(found, 1e-9)]


@dataclass(frozen=True)
class CoefficientSet:
    """a0, b0, c0, d0 expanded about ``x0``.

    The series variable is u = (x - x0) / scale and the series hold
    ``scale`` times the coefficient functions, so the system reads
    dphi/du = scale * M(x0 + scale*u) phi.  Rescaling the variable leaves
    every delta root unchanged; it keeps coefficients in range when the
    nearest singularity is very close to x0.
    """

    a0: XSeries
    b0: XSeries
    c0: XSeries
    d0: XSeries
    x0: float = 0.0
    scale: float = 1.0
    exact: Optional[ExactCoefficients] = None
    label: str = ""

    def __post_init__(self):
        orders = {s.order for s in self.series()}
        if len(orders) != 1:
            raise ValueError(f"coefficient series have different orders: {sorted(orders)}")
        for s in self.series():
            if s.x0 != self.x0:
                raise SeriesMismatch(f"series expanded at {s.x0}, set declares {self.x0}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def order(self):
        return self.a0.order

    def series(self):
        return self.a0, self.b0, self.c0, self.d0

    def is_decoupled(self):
        return self.b0.is_zero() and self.d0.is_zero()

    def at_energy(self, energies, order=None, dtype=float):
        """Numeric Taylor coefficient arrays, each of shape (order + 1, m)."""
        top = self.order if order is None else order
        e = np.atleast_1d(np.asarray(energies, dtype=dtype))
        return tuple(np.ascontiguousarray(s.at_energy(e, dtype)[: top + 1]) for s in self.series())


@dataclass(frozen=True)
class AimLevel:
    n: int
    a: XSeries
    b: XSeries
    c: XSeries
    d: XSeries
    scale: float = 1.0

    @property
    def valid_order(self):
        return self.a.order


@dataclass(frozen=True)
class Eigenvalue:
    E: float
    first_stable_iteration: int
    drift: float
    residual: float
    branch: str
    drift_history: tuple = ()


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: tuple
    iterations_used: int
    converged: bool
    unconverged: tuple = ()
    excluded: tuple = ()

    def values(self, branch=None):
        """Accepted energies; ``branch`` in {"1", "2", "both"} filters them."""
        return [ev.E for ev in self.eigenvalues if branch is None or ev.branch == branch]

    def __len__(self):
        return len(self.eigenvalues)

    def __iter__(self):
        return iter(self.eigenvalues)

    def __getitem__(self, i):
        return self.eigenvalues[i]


@dataclass(frozen=True)
class SolveOptions:
    max_iter: int = 40
    conv_tol: float = 1e-8
    window: Optional[RootWindow] = None
    min_stable: int = 3
    n_states: Optional[int] = None
    method: str = "pointwise"
    root_tol: float = 1e-13
    noise_floor: float = NOISE_FLOOR
    # (branch, energy, radius): roots of that branch near energy are not tracked
    exclude: tuple = ()


@dataclass(frozen=True)
class WaveSample:
    grid: np.ndarray
    values: np.ndarray
    gamma: float
    branch: int
    E: float = math.nan


# ---------------------------------------------------------------- symbolic


def init_level(c):
    return AimLevel(0, c.a0, c.b0, c.c0, c.d0, 1.0)


def iterate(prev, c, rescale=True):
    """Level n+1 from level n; jointly rescaled unless ``rescale`` is False."""
    if prev.valid_order < 1:
        raise OrderExhausted(
            f"level {prev.n} has no order left; rebuild the coefficients with a larger order"
        )
    a0, b0, c0, d0 = c.series()
    a = series_mul(a0, prev.a) + series_diff(prev.a) + series_mul(d0, prev.b)
    b = series_mul(b0, prev.a) + series_diff(prev.b) + series_mul(c0, prev.b)
    cc = series_mul(c0, prev.c) + series_diff(prev.c) + series_mul(b0, prev.d)
    d = series_mul(d0, prev.c) + series_diff(prev.d) + series_mul(a0, prev.d)
    scale = prev.scale
    if rescale:
        big = max(s.max_abs() for s in (a, b, cc, d))
        if big > 0:
            a, b, cc, d = (s / big for s in (a, b, cc, d))
            scale /= big
    return AimLevel(prev.n + 1, a, b, cc, d, scale)


def delta(prev, cur):
    """(delta1, delta2) at the expansion point, each normalised to max |coeff| 1."""
    if cur.n != prev.n + 1:
        raise ValueError("delta needs consecutive levels")
    a1, b1 = series_at_x0(prev.a), series_at_x0(prev.b)
    c1, d1 = series_at_x0(prev.c), series_at_x0(prev.d)
    a2, b2 = series_at_x0(cur.a), series_at_x0(cur.b)
    c2, d2 = series_at_x0(cur.c), series_at_x0(cur.d)
    return (b1 * a2 - a1 * b2).normalized(), (d1 * c2 - c1 * d2).normalized()


# --------------------------------------------------------------- pointwise


def sweep(c, energies, n_levels):
    """delta1, delta2 and their magnitudes for levels 1..n_levels.

    Returns four arrays of shape (n_levels + 1, m); row 0 is NaN.  The
    magnitude of delta1 is |b_{n-1} a_n| + |a_{n-1} b_n|, so the ratio
    |delta| / magnitude measures how far the cancellation has gone.
    Rows where delta factorises (see ``_cross``) hold the level-n factor.
    """
    return _sweep(c, energies, n_levels)[:4]


# which quantity a sweep row holds
DELTA, FIRST, SECOND = 0, 1, 2


def _sweep(c, energies, n_levels, full=False):
    if n_levels > c.order:
        raise OrderExhausted(f"{n_levels} levels need series order >= {n_levels}, have {c.order}")
    # delta keeps only the few digits that survive the cancellation in
    # B[n-1] A[n] - A[n-1] B[n], so the whole chain runs in long double
    # Truncating at n_levels is exact for the values at x0 and much cheaper,
    # but the last rows then keep few Taylor coefficients, so their
    # per-level normalisation is coarse (the top row is a bare sign).  Use
    # ``full`` where magnitudes matter.
    coeffs = c.at_energy(energies, None if full else n_levels, dtype=np.longdouble)
    A, B, C, D = kernels.level_values(*coeffs, n_levels)
    out = [np.full(A.shape, np.nan) for _ in range(4)]
    kinds = [np.zeros(n_levels + 1, dtype=int) for _ in range(2)]
    out[0][1:], out[1][1:], kinds[0][1:] = _cross(A, B)
    out[2][1:], out[3][1:], kinds[1][1:] = _cross(C, D)
    return (*out, *kinds)


def _cross(A, B):
    """Rows of delta = B[n-1] A[n] - A[n-1] B[n] with magnitudes.

    A symmetry about x0 (the Rabi parity x -> -x, for one) can make one of
    the two products vanish identically, so delta = +-F[n-1] G[n] where F
    and G alternate between A and B from level to level.  Its roots are
    then the union of two sequences that each update every other level,
    and where the sequences share a limit the roots are double and
    invisible to a sign scan.  Such rows hold the live level-n factor and
    are tagged FIRST (A) or SECOND (B) so the two sequences can be
    tracked separately.  A factor is already scaled by the largest Taylor
    coefficient of its pair, so its magnitude is 1.
    """
    p, q = B[:-1] * A[1:], A[:-1] * B[1:]
    d, m = p - q, np.abs(p) + np.abs(q)
    kind = np.full(d.shape[0], DELTA)
    p_dead = ~np.any(p, axis=1)
    q_dead = ~np.any(q, axis=1)
    only = p_dead & ~q_dead
    d[only], m[only], kind[only] = B[1:][only], 1.0, SECOND
    only = q_dead & ~p_dead
    d[only], m[only], kind[only] = A[1:][only], 1.0, FIRST
    return d, m, kind


def delta_at(c, energies, n):
    """Relative delta1, delta2 at level ``n`` for an array of energies."""
    d1, m1, d2, m2 = sweep(c, energies, n)
    with np.errstate(invalid="ignore", divide="ignore"):
        return d1[n] / m1[n], d2[n] / m2[n]


def _gathered(c, energies, levels, branches, full=False):
    """Sweep value and magnitude at per-element level and branch."""
    top = int(levels.max())
    d1, m1, d2, m2 = _sweep(c, energies, top, full)[:4]
    cols = np.arange(energies.size)
    one = branches == 1
    dv = np.where(one, d1[levels, cols], d2[levels, cols])
    mv = np.where(one, m1[levels, cols], m2[levels, cols])
    return dv, mv


def _gamma_sq(f, g, m):
    if f[m] != 0 and g[m] == 0 and g[m - 1] != 0 and g[m + 1] != 0:
        return g[m - 1] * g[m + 1] / f[m] ** 2
    if f[m] == 0 and g[m] != 0 and f[m - 1] != 0 and f[m + 1] != 0:
        return g[m] ** 2 / (f[m - 1] * f[m + 1])
    return np.nan


def gamma_at(c, energy, n_levels, branch=1):
    """gamma = lim b_n/a_n (branch 1) or d_n/c_n (branch 2) at x0.

    When a symmetry about x0 zeroes a_n(x0) and b_n(x0) on alternate
    levels the ratio flips between 0 and infinity, but
    gamma^2 = b_{n-1} b_{n+1} / a_n^2 still converges.  Its sign is then a
    genuine choice (the two signs belong to partner solutions); the root
    taken makes gamma * d0(x0) <= 0 (b0 for branch 2), the combination
    that decays away from x0.  Pass gamma explicitly for the other one.
    """
    if n_levels < 2:
        raise ValueError("gamma needs at least two levels")
    coeffs = c.at_energy([energy], n_levels, dtype=np.longdouble)
    A, B, C, D = (v[:, 0] for v in kernels.level_values(*coeffs, n_levels, normalize=False))
    f, g, cross = (A, B, D[0]) if branch == 1 else (C, D, B[0])
    if not (np.all(f[-4:]) and np.all(g[-4:])):
        if n_levels < 3:
            raise GammaSingular(f"diagonal entry vanishes at E = {energy}")
        # the two neighbouring estimates carry factors (m+1)/m and
        # (m+1)/(m+2) from the factorial growth; their product cancels both
        sq = _gamma_sq(f, g, n_levels - 1) * _gamma_sq(f, g, n_levels - 2)
        if not np.isfinite(sq) or sq < 0:
            raise GammaSingular(f"no real gamma at E = {energy}")
        root = float(np.sqrt(np.sqrt(sq)))
        return -root if cross > 0 else root
    num, den = g[-1], f[-1]
    if not np.isfinite(num / den) or abs(den) <= 1e-14 * abs(num):
        raise GammaSingular(f"diagonal entry vanishes at E = {energy}")
    return float(num / den)


# ---------------------------------------------------------------- tracking


class _Tracker:
    """Follows the roots of one delta branch from level to level."""

    def __init__(self, conv_tol, min_stable, match_radius):
        self.conv_tol = conv_tol
        self.min_stable = min_stable
        self.match_radius = match_radius
        self.prev = np.empty(0)
        self.prev_ids = np.empty(0, dtype=int)
        self.streak = {}
        self.history = {}
        self.accepted = {}
        self._next = 0
        self.last_level = 0

    def update(self, n, roots, residuals):
        roots = np.asarray(roots, dtype=float)
        ids = np.empty(roots.size, dtype=int)
        matched = np.full(roots.size, -1)
        if self.prev.size and roots.size:
            dist = np.abs(roots[:, None] - self.prev[None, :])
            near_prev = dist.argmin(axis=1)
            near_new = dist.argmin(axis=0)
            for i, j in enumerate(near_prev):
                if near_new[j] == i and dist[i, j] <= self.match_radius:
                    matched[i] = j
        for i, r in enumerate(roots):
            j = matched[i]
            if j < 0:
                tid = self._next
                self._next += 1
                self.streak[tid] = 0
                self.history[tid] = []
            else:
                tid = int(self.prev_ids[j])
                drift = abs(r - self.prev[j])
                self.history[tid].append(drift)
                self.streak[tid] = self.streak[tid] + 1 if drift <= self.conv_tol else 0
                if self.streak[tid] >= self.min_stable and tid not in self.accepted:
                    self.accepted[tid] = (float(r), n, drift, float(residuals[i]))
            ids[i] = tid
        self.prev, self.prev_ids = roots, ids
        self.last_level = n

    def records(self):
        return [(tid, *rec) for tid, rec in self.accepted.items()]

    def open_roots(self):
        """Roots at the latest level whose track was never accepted."""
        return [float(r) for r, t in zip(self.prev, self.prev_ids) if int(t) not in self.accepted]


def _merge_branches(trackers, radius, c=None):
    """Accepted roots of all trackers, one record per eigenvalue.

    ``trackers`` maps (branch, kind) to a tracker.  Within a branch,
    records closer than ``radius`` are one root; across branches they are
    reported once with branch "both".  With ``c`` given, residuals are
    recomputed from the whole series (see ``_full_residuals``).
    """
    per_branch = {1: [], 2: []}
    for (br, _), tr in sorted(trackers.items()):
        for tid, e, it, drift, res in tr.records():
            per_branch[br].append(
                dict(E=e, it=it, drift=drift, res=res, hist=tuple(tr.history[tid]), branch=str(br),
                     src=((br, it, e),))
            )
    for br, recs in per_branch.items():
        recs.sort(key=lambda r: r["E"])
        kept = []
        for r in recs:
            if kept and abs(r["E"] - kept[-1]["E"]) <= radius:
                if r["it"] < kept[-1]["it"]:
                    kept[-1] = r
                continue
            kept.append(r)
        per_branch[br] = kept
    one, two = per_branch[1], per_branch[2]
    used = set()
    out = []
    for r in one:
        best = None
        for k, s in enumerate(two):
            if k not in used and abs(s["E"] - r["E"]) <= radius:
                if best is None or abs(s["E"] - r["E"]) < abs(two[best]["E"] - r["E"]):
                    best = k
        if best is None:
            out.append(r)
        else:
            used.add(best)
            s = two[best]
            out.append(dict(
                E=0.5 * (r["E"] + s["E"]),
                it=min(r["it"], s["it"]),
                drift=max(r["drift"], s["drift"]),
                res=max(r["res"], s["res"]),
                hist=r["hist"] if len(r["hist"]) >= len(s["hist"]) else s["hist"],
                branch="both",
                src=r["src"] + s["src"],
            ))
    out.extend(s for k, s in enumerate(two) if k not in used)
    out.sort(key=lambda r: r["E"])
    if c is not None and out:
        _full_residuals(c, out)
    return tuple(
        Eigenvalue(r["E"], r["it"], r["drift"], r["res"], r["branch"], r["hist"]) for r in out
    )


def _full_residuals(c, records):
    """Residual of each record at its acceptance level, whole series.

    The sweeps that find roots truncate the series at their top level, which
    leaves magnitudes coarse near that level.  A "both" record keeps the
    larger of its two branch residuals.  Where a special energy makes the
    normaliser vanish along with the value (so the ratio jumps to 1 at
    the root itself) the nearby points 1e-12 away give the smaller value,
    so the least of the three is kept.
    """
    src = [(i, *t) for i, r in enumerate(records) for t in r["src"]]
    idx = np.array([t[0] for t in src])
    br = np.tile(np.array([t[1] for t in src]), 3)
    lev = np.tile(np.array([t[2] for t in src]), 3)
    e = np.array([t[3] for t in src], dtype=float)
    h = 1e-12 * np.maximum(1.0, np.abs(e))
    dv, mv = _gathered(c, np.concatenate([e - h, e, e + h]), lev, br, full=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        res = np.min((np.abs(dv) / mv).reshape(3, -1), axis=0)
    for i, r in enumerate(records):
        r["res"] = float(np.max(res[idx == i]))


def _open_roots(trackers):
    return sorted(r for tr in trackers.values() for r in tr.open_roots())


def _is_converged(trackers, merged, opts, radius):
    open_roots = _open_roots(trackers)
    if opts.n_states is None:
        return not open_roots
    if len(merged) < opts.n_states:
        return False
    ceiling = merged[opts.n_states - 1].E + radius
    return not any(r <= ceiling for r in open_roots)


# ------------------------------------------------------------------ solver


def solve_spectrum(c, opts=None, **overrides):
    """Eigenvalues of the system as stable roots of delta1 and delta2.

    A root is accepted once it has moved by at most ``conv_tol`` for
    ``min_stable`` consecutive levels.  Roots accepted on both branches
    within 10 * conv_tol are reported once with branch "both".  Iteration
    stops as soon as every root still present is accepted or, with
    ``n_states`` set, once the lowest ``n_states`` accepted roots have no
    unaccepted root beneath them.  If the cap is hit first, the partial
    spectrum comes back with ``converged=False`` and a
    ``NoConvergenceWarning``.
    """
    opts = SolveOptions() if opts is None else opts
    if overrides:
        opts = SolveOptions(**{**opts.__dict__, **overrides})
    if c.is_decoupled():
        raise DecoupledSystem("b0 and d0 vanish identically; use the exact decoupled solution")
    if opts.max_iter > c.order:
        raise OrderExhausted(
            f"max_iter={opts.max_iter} needs series order >= {opts.max_iter}, have {c.order}"
        )
    if opts.window is None:
        raise ValueError("an energy window is required: SolveOptions(window=RootWindow(lo, hi))")
    window = opts.window
    radius = 10 * opts.conv_tol
    match = max(100 * opts.conv_tol, 10 * window.scan_step)
    trackers = {}
    if opts.method == "pointwise":
        levels = _pointwise_levels(c, window, opts)
    elif opts.method == "polynomial":
        levels = _polynomial_levels(c, window, opts)
    else:
        raise ValueError(f"unknown method {opts.method!r}")

    used = 0
    converged = False
    excluded = []
    for n, found in levels:
        excluded = []
        for key, (roots, res) in found.items():
            for br, e0, rad in opts.exclude:
                if key[0] == br:
                    near = np.abs(roots - e0) <= rad
                    excluded.extend(roots[near])
                    roots, res = roots[~near], res[~near]
            if key not in trackers:
                trackers[key] = _Tracker(opts.conv_tol, opts.min_stable, match)
            trackers[key].update(n, roots, res)
        used = n
        merged = _merge_branches(trackers, radius)
        if merged and _is_converged(trackers, merged, opts, radius):
            converged = True
            break
    levels.close()
    merged = _merge_branches(trackers, radius, c)
    unconverged = tuple(_open_roots(trackers))
    if not converged:
        warnings.warn(
            f"{c.label or 'system'}: {len(unconverged)} root(s) still drifting after {used} iterations",
            NoConvergenceWarning,
            stacklevel=2,
        )
    return Spectrum(merged, used, converged, unconverged, tuple(sorted(float(e) for e in excluded)))


def _chunks(start, max_iter):
    edges = [e for e in (12, 20, 30, 45, 60, 80, 110, 150) if e < max_iter] + [max_iter]
    out, lo = [], start
    for hi in edges:
        if hi >= lo:
            out.append((lo, hi))
            lo = hi + 1
    return out


def _pointwise_chunk(c, grid, lo, hi, opts):
    """Roots of both deltas for every level in lo..hi from one sweep."""
    d1, m1, d2, m2, k1, k2 = _sweep(c, grid, hi)
    plo, phi, plev, pbr = [], [], [], []
    for n in range(lo, hi + 1):
        for br, dv, mv in ((1, d1[n], m1[n]), (2, d2[n], m2[n])):
            idx = sign_change_brackets(grid, dv, opts.noise_floor * mv)
            plo.append(grid[idx])
            phi.append(grid[idx + 1])
            plev.append(np.full(idx.size, n))
            pbr.append(np.full(idx.size, br))
    plo, phi = np.concatenate(plo), np.concatenate(phi)
    plev, pbr = np.concatenate(plev).astype(int), np.concatenate(pbr).astype(int)
    roots = resid = np.empty(0)
    if plo.size:
        def f(x, idx):
            return _gathered(c, np.asarray(x), plev[idx], pbr[idx])[0]

        slo, shi, owner = subdivide(f, plo, phi, indexed=True)
        plev, pbr = plev[owner], pbr[owner]
        # a bracket made of rounding noise can lose its sign change when
        # re-evaluated in a different batch; such brackets come back NaN
        roots = refine_brackets(f, slo, shi, opts.root_tol, indexed=True, strict=False)
        ok = ~np.isnan(roots)
        roots, plev, pbr = roots[ok], plev[ok], pbr[ok]
        dv, mv = _gathered(c, roots, plev, pbr) if roots.size else (roots, roots)
        with np.errstate(invalid="ignore", divide="ignore"):
            resid = np.abs(dv) / mv
    out = []
    for n in range(lo, hi + 1):
        found = {}
        for br, kinds in ((1, k1), (2, k2)):
            sel = (plev == n) & (pbr == br)
            r, rr = roots[sel], resid[sel]
            order = np.argsort(r)
            r, rr = r[order], rr[order]
            # the same root reached from two adjacent sub-brackets
            keep = np.ones(r.size, dtype=bool)
            keep[1:] = np.diff(r) > 4 * opts.root_tol
            found[(br, int(kinds[n]))] = (r[keep], rr[keep])
        out.append((n, found))
    return out


def _pointwise_levels(c, window, opts):
    grid = window.grid()
    for lo, hi in _chunks(2, opts.max_iter):
        yield from _pointwise_chunk(c, grid, lo, hi, opts)


def _condition_polys(prev, cur):
    """Per branch: (kind, polynomial) with the same factorisation rule as ``_cross``."""
    out = []
    for f, g in (("a", "b"), ("c", "d")):
        f1, g1 = series_at_x0(getattr(prev, f)), series_at_x0(getattr(prev, g))
        f2, g2 = series_at_x0(getattr(cur, f)), series_at_x0(getattr(cur, g))
        p, q = g1 * f2, f1 * g2
        if p.is_zero() and not q.is_zero():
            out.append((SECOND, g2.normalized()))
        elif q.is_zero() and not p.is_zero():
            out.append((FIRST, f2.normalized()))
        else:
            out.append((DELTA, (p - q).normalized()))
    return out


def _polynomial_levels(c, window, opts):
    prev = init_level(c)
    cur = iterate(prev, c)
    for n in range(2, opts.max_iter + 1):
        prev, cur = cur, iterate(cur, c)
        found = {}
        for br, (kind, poly) in enumerate(_condition_polys(prev, cur), start=1):
            roots = np.array(real_roots(poly, window, tol=max(opts.root_tol, 1e-12)))
            mag = np.abs(poly.coeffs)[::-1]
            resid = np.array([
                abs(poly(r)) / max(float(np.polyval(mag, abs(r))), 1e-300) for r in roots
            ])
            found[(br, kind)] = (roots, resid)
        yield n, found


# ------------------------------------------------------------ wavefunction


def wavefunction_combination(c, E, branch=1, grid=None, level=None, n_levels=None, gamma=None):
    """phi1 + gamma phi2 (branch 1) or phi2 + gamma phi1 (branch 2) on ``grid``.

    gamma is b/a (or d/c) at the expansion point, from ``level`` when given
    and otherwise from a pointwise run to ``n_levels`` (default: the full
    series order).  It is held constant over the grid.  The integrand uses
    the closed-form coefficients, integrated by cumulative Simpson and
    exponentiated, normalised to 1 at the grid point nearest x0.
    """
    if c.exact is None:
        raise ValueError("wavefunctions need closed-form coefficients")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    if gamma is None:
        if level is not None:
            num = series_at_x0(level.b if branch == 1 else level.d)(E)
            den = series_at_x0(level.a if branch == 1 else level.c)(E)
            if num == 0 or den == 0:
                # alternating zeros: the single-level ratio says nothing
                gamma = gamma_at(c, E, level.n, branch)
            elif abs(den) <= 1e-14 * abs(num):
                raise GammaSingular(f"diagonal entry vanishes at E = {E}")
            else:
                gamma = num / den
        else:
            gamma = gamma_at(c, E, n_levels or c.order, branch)
    ex = c.exact

    def integrand_at(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if branch == 1:
                v = ex.a0(x, E) + gamma * ex.d0(x, E)
            else:
                v = ex.c0(x, E) + gamma * ex.b0(x, E)
        return np.asarray(v, dtype=float) * np.ones_like(x)

    integrand = integrand_at(grid)
    scale = np.max(np.abs(integrand[np.isfinite(integrand)]), initial=1.0)
    for pole in c.exact.poles_in(grid[0], grid[-1], samples=grid):
        # at an eigenvalue the numerator can cancel a pole; keep it only
        # if the residue is visible
        h = 1e-6 * (1 + abs(pole))
        near = integrand_at([pole - h, pole + h])
        if not np.all(np.isfinite(near)) or np.max(np.abs(near)) * h > 1e-6 * scale:
            raise PoleOnGrid(pole)
    if not np.all(np.isfinite(integrand)):
        raise PoleOnGrid(float(grid[~np.isfinite(integrand)][0]))
    running = cumulative_simpson(integrand, x=grid, initial=0.0)
    ref = int(np.argmin(np.abs(grid - c.x0)))
    values = np.exp(running - running[ref])
    return WaveSample(grid, values, float(gamma), int(branch), float(E))
