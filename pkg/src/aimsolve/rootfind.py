"""Real roots of E-polynomials (or sampled functions) inside a window.

Strategy: sample on a uniform grid, keep intervals with a sign change,
subdivide each once to split close pairs, then refine every bracket with
an Illinois false-position step that falls back to bisection whenever the
secant estimate is not making progress.  Iterates never leave the bracket.

Even-multiplicity roots produce no sign change and are not reported.
"""

from dataclasses import dataclass

import numpy as np

from .algebra import EnergyPoly
from .errors import BadBracket, NoRoots


@dataclass(frozen=True)
class RootWindow:
    lo: float
    hi: float
    scan_step: float = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")
        if self.scan_step is None:
            object.__setattr__(self, "scan_step", (self.hi - self.lo) * 1e-3)
        if not 0 < self.scan_step <= (self.hi - self.lo) / 10 * (1 + 1e-12):
            raise ValueError("scan_step must lie in (0, (hi - lo) / 10]")

    def grid(self):
        n = int(np.ceil((self.hi - self.lo) / self.scan_step - 1e-9))
        return np.linspace(self.lo, self.hi, n + 1)


def _normalized(p):
    p = EnergyPoly(p)
    return p.normalized()


def sign_change_brackets(grid, values, floor=None):
    """Indices i with a sign change between values[i] and values[i+1].

    A sample that is exactly zero pairs with its left neighbour so the
    root is reported once.  If ``floor`` is given (an array of magnitudes
    the same shape as ``values``), brackets where both ends sit below it
    are treated as rounding noise and dropped.
    """
    v = np.asarray(values, dtype=float)
    s = np.sign(v)
    left, right = s[:-1], s[1:]
    hit = (left * right < 0) | ((right == 0) & (left != 0))
    if s.size and s[0] == 0 and s.size > 1:
        hit[0] = True
    if floor is not None:
        fl = np.asarray(floor)
        quiet = (np.abs(v[:-1]) <= fl[:-1]) & (np.abs(v[1:]) <= fl[1:])
        hit &= ~quiet
    return np.nonzero(hit)[0]


def scan_sign_changes(p, w):
    """Brackets [e_i, e_{i+1}] across which ``p`` changes sign."""
    p = _normalized(p)
    if p.degree < 1:
        raise NoRoots("a constant polynomial has no isolated roots")
    grid = w.grid()
    vals = p(grid)
    return [(float(grid[i]), float(grid[i + 1])) for i in sign_change_brackets(grid, vals)]


def refine_brackets(f, lo, hi, tol, max_steps=200, indexed=False, strict=True):
    """Vectorised bracketed root refinement.

    ``f`` maps an array of abscissae to an array of values elementwise;
    element k of ``lo``/``hi`` brackets one root.  With ``indexed=True`` it
    is called as ``f(x, idx)`` where ``idx`` names the bracket each abscissa
    belongs to.  Stops per element when the bracket is narrower than
    ``tol`` or f hits zero exactly.  A bracket without a sign change
    raises ``BadBracket``, or yields NaN when ``strict`` is False.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    if a.size == 0:
        return a
    if not indexed:
        g = f
        f = lambda x, idx: g(x)  # noqa: E731
    every = np.arange(a.size)
    fa = np.asarray(f(a, every), dtype=float).copy()
    fb = np.asarray(f(b, every), dtype=float).copy()
    dead = ~(np.sign(fa) * np.sign(fb) <= 0)
    if dead.any() and strict:
        raise BadBracket("no sign change across bracket")
    root = np.where(fa == 0, a, np.where(fb == 0, b, np.nan))
    done = ~np.isnan(root) | dead
    side = np.zeros(a.size, dtype=int)
    for _ in range(max_steps):
        active = ~done & (np.abs(b - a) > tol)
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        ai, bi, fai, fbi = a[idx], b[idx], fa[idx], fb[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (ai * fbi - bi * fai) / (fbi - fai)
        mid = 0.5 * (ai + bi)
        # bisect when the false-position point is unusable or has stalled on one side
        bad = ~np.isfinite(c) | (c <= np.minimum(ai, bi)) | (c >= np.maximum(ai, bi))
        bad |= np.abs(side[idx]) >= 3
        c = np.where(bad, mid, c)
        side[idx[bad]] = 0
        fc = np.asarray(f(c, idx), dtype=float)
        zero = fc == 0
        root[idx[zero]] = c[zero]
        done[idx[zero]] = True
        left = np.sign(fc) == np.sign(fai)
        # root lies in [c, b]
        sel = idx[left & ~zero]
        a[sel] = c[left & ~zero]
        fa[sel] = fc[left & ~zero]
        fb[sel] *= np.where(side[sel] > 0, 0.5, 1.0)
        side[sel] = np.where(side[sel] > 0, side[sel] + 1, 1)
        # root lies in [a, c]
        sel = idx[~left & ~zero]
        b[sel] = c[~left & ~zero]
        fb[sel] = fc[~left & ~zero]
        fa[sel] *= np.where(side[sel] < 0, 0.5, 1.0)
        side[sel] = np.where(side[sel] < 0, side[sel] - 1, -1)
    rest = np.isnan(root) & ~dead
    root[rest] = np.where(np.abs(fa[rest]) <= np.abs(fb[rest]), a[rest], b[rest])
    return root


def refine_root(p, bracket, tol=1e-12):
    """Single-bracket refinement of a polynomial root."""
    p = _normalized(p)
    lo, hi = float(bracket[0]), float(bracket[1])
    if np.sign(p(lo)) * np.sign(p(hi)) > 0:
        raise BadBracket(f"no sign change across [{lo}, {hi}]")
    return float(refine_brackets(p, [lo], [hi], tol)[0])


def subdivide(f, lo, hi, parts=10, indexed=False):
    """Split each bracket into ``parts`` pieces and keep those that change sign.

    Returns the new brackets and, for each, the index of the bracket it
    came from.  ``indexed`` has the same meaning as in ``refine_brackets``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.size == 0:
        return lo, hi, np.zeros(0, dtype=int)
    t = np.linspace(0.0, 1.0, parts + 1)
    pts = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    if indexed:
        owner_of = np.repeat(np.arange(lo.size), parts + 1)
        vals = np.asarray(f(pts.ravel(), owner_of)).reshape(pts.shape)
    else:
        vals = np.asarray(f(pts.ravel())).reshape(pts.shape)
    new_lo, new_hi, owner = [], [], []
    for k in range(lo.size):
        sub = sign_change_brackets(pts[k], vals[k])
        if sub.size == 0:
            # sign change sits within rounding of an endpoint; keep the original
            sub_lo, sub_hi = [lo[k]], [hi[k]]
        else:
            sub_lo, sub_hi = pts[k, sub], pts[k, sub + 1]
        new_lo.extend(sub_lo)
        new_hi.extend(sub_hi)
        owner.extend([k] * len(sub_lo))
    return np.array(new_lo), np.array(new_hi), np.array(owner, dtype=int)


def merge_close(roots, radius):
    """Sorted roots with neighbours closer than ``radius`` collapsed."""
    roots = np.sort(np.asarray(roots, dtype=float))
    if roots.size == 0:
        return roots
    keep = [roots[0]]
    for r in roots[1:]:
        if r - keep[-1] > radius:
            keep.append(r)
    return np.array(keep)


def real_roots(p, w, tol=1e-10):
    """All sign-changing real roots of ``p`` in the window, increasing."""
    p = _normalized(p)
    if p.degree < 1:
        return []
    brackets = scan_sign_changes(p, w)
    if not brackets:
        return []
    lo, hi = np.array(brackets).T
    lo, hi, _ = subdivide(p, lo, hi)
    roots = refine_brackets(p, lo, hi, min(tol, 1e-3 * w.scan_step))
    return [float(r) for r in merge_close(roots, 10 * tol)]
