"""Polynomials in the energy E and truncated power series over them.

Every quantity the iteration manipulates lives in this ring: a Taylor
series in u = x - x0 whose coefficients are real polynomials in E.

Precision budget: coefficients are IEEE doubles.  Products and reciprocals
are exact up to rounding, so a series built from a handful of operations
carries a relative error of a few ulps per coefficient.  The iteration
rescales each level (see ``engine``) so magnitudes stay near one.
"""

import numpy as np

from . import kernels
from .errors import SeriesMismatch, SingularCoefficient

TRIM_BELOW = 1e-300


def _trim(c):
    c = np.asarray(c, dtype=float).ravel()
    nz = np.nonzero(np.abs(c) > TRIM_BELOW)[0]
    return c[: nz[-1] + 1] if nz.size else c[:0]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class EnergyPoly:
    """Dense real polynomial in E; ``coeffs[i]`` multiplies E**i.

    The zero polynomial is stored as an empty coefficient array, so
    ``EnergyPoly([])`` and ``EnergyPoly([0.0])`` are the same value.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs=()):
        if isinstance(coeffs, EnergyPoly):
            self._c = coeffs._c
            return
        if np.isscalar(coeffs):
            coeffs = [coeffs]
        self._c = _frozen(_trim(coeffs))

    @classmethod
    def energy(cls):
        return cls([0.0, 1.0])

    @property
    def coeffs(self):
        return self._c

    @property
    def degree(self):
        """Polynomial degree; -1 for the zero polynomial."""
        return len(self._c) - 1

    def is_zero(self):
        return len(self._c) == 0

    def is_constant(self):
        return len(self._c) <= 1

    def constant(self):
        return float(self._c[0]) if len(self._c) else 0.0

    def max_abs(self):
        return float(np.abs(self._c).max()) if len(self._c) else 0.0

    def normalized(self):
        """Same roots, coefficients divided by the largest magnitude."""
        m = self.max_abs()
        return self if m == 0 else EnergyPoly(self._c / m)

    def __call__(self, e):
        return poly_eval(self, e)

    def __add__(self, other):
        other = _as_poly(other)
        if other is None:
            return NotImplemented
        n = max(len(self._c), len(other._c))
        out = np.zeros(n)
        out[: len(self._c)] += self._c
        out[: len(other._c)] += other._c
        return EnergyPoly(out)

    __radd__ = __add__

    def __neg__(self):
        return EnergyPoly(-self._c)

    def __sub__(self, other):
        other = _as_poly(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = _as_poly(other)
        if other is None:
            return NotImplemented
        return poly_mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return EnergyPoly(self._c / float(k))

    def __eq__(self, other):
        other = _as_poly(other)
        if other is None:
            return NotImplemented
        return np.array_equal(self._c, other._c)

    def __hash__(self):
        return hash(tuple(self._c))

    def __repr__(self):
        return f"EnergyPoly({list(map(float, self._c))})"


def _as_poly(v):
    if isinstance(v, EnergyPoly):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return EnergyPoly([float(v)])
    return None


def poly_mul(p, q):
    if p.is_zero() or q.is_zero():
        return EnergyPoly()
    return EnergyPoly(np.convolve(p.coeffs, q.coeffs))


def poly_eval(p, e):
    """Horner evaluation; ``e`` may be a scalar or an array."""
    e = np.asarray(e, dtype=float)
    acc = np.zeros_like(e)
    for c in p.coeffs[::-1]:
        acc = acc * e + c
    return float(acc) if acc.ndim == 0 else acc


class XSeries:
    """Truncated Taylor series sum_i terms[i] * u**i, u = x - x0.

    ``terms`` is stored as a read-only array of shape (order + 1, D) whose
    row i holds the E-coefficients of the i-th Taylor coefficient.
    """

    __slots__ = ("_t", "x0")

    def __init__(self, terms, x0=0.0):
        if isinstance(terms, np.ndarray) and terms.ndim == 2:
            arr = np.array(terms, dtype=float)
        else:
            rows = [EnergyPoly(t).coeffs for t in terms]
            if not rows:
                raise ValueError("a series needs at least one term")
            width = max(1, max(len(r) for r in rows))
            arr = np.zeros((len(rows), width))
            for i, r in enumerate(rows):
                arr[i, : len(r)] = r
        if arr.shape[0] == 0:
            raise ValueError("a series needs at least one term")
        # drop E-columns that are zero in every row
        nz = np.nonzero(np.any(np.abs(arr) > TRIM_BELOW, axis=0))[0]
        width = nz[-1] + 1 if nz.size else 1
        arr = arr[:, :width]
        arr[np.abs(arr) <= TRIM_BELOW] = 0.0
        self._t = _frozen(arr)
        self.x0 = float(x0)

    @classmethod
    def constant(cls, value, order, x0=0.0):
        p = EnergyPoly(value)
        terms = np.zeros((order + 1, max(1, len(p.coeffs))))
        terms[0, : len(p.coeffs)] = p.coeffs
        return cls(terms, x0)

    @classmethod
    def variable(cls, order, x0=0.0):
        """The series of x itself: x0 + u."""
        terms = np.zeros((order + 1, 1))
        terms[0, 0] = x0
        if order >= 1:
            terms[1, 0] = 1.0
        return cls(terms, x0)

    @classmethod
    def energy(cls, order, x0=0.0):
        return cls.constant(EnergyPoly.energy(), order, x0)

    @property
    def order(self):
        return self._t.shape[0] - 1

    @property
    def terms(self):
        return self._t

    @property
    def energy_degree(self):
        nz = np.nonzero(np.any(self._t != 0.0, axis=0))[0]
        return int(nz[-1]) if nz.size else -1

    def term(self, i):
        return EnergyPoly(self._t[i])

    def __getitem__(self, i):
        return self.term(i)

    def __len__(self):
        return self.order + 1

    def truncate(self, order):
        if order > self.order:
            raise ValueError("cannot extend a truncated series")
        return XSeries(self._t[: order + 1], self.x0)

    def max_abs(self):
        return float(np.abs(self._t).max())

    def is_zero(self):
        return not np.any(self._t)

    def _check(self, other):
        if self.x0 != other.x0:
            raise SeriesMismatch(f"expansion points differ: {self.x0} vs {other.x0}")

    def __add__(self, other):
        if isinstance(other, XSeries):
            self._check(other)
            n = min(self.order, other.order) + 1
            w = max(self._t.shape[1], other._t.shape[1])
            out = np.zeros((n, w))
            out[:, : self._t.shape[1]] += self._t[:n]
            out[:, : other._t.shape[1]] += other._t[:n]
            return XSeries(out, self.x0)
        p = _as_poly(other)
        if p is None:
            return NotImplemented
        return self + XSeries.constant(p, self.order, self.x0)

    __radd__ = __add__

    def __neg__(self):
        return XSeries(-self._t, self.x0)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, XSeries):
            return series_mul(self, other)
        if isinstance(other, EnergyPoly):
            if other.is_zero():
                return XSeries(np.zeros((self.order + 1, 1)), self.x0)
            out = np.array([np.convolve(row, other.coeffs) for row in self._t])
            return XSeries(out, self.x0)
        if isinstance(other, (int, float, np.floating, np.integer)):
            return XSeries(self._t * float(other), self.x0)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, XSeries):
            return series_mul(self, series_recip(other))
        if isinstance(other, (int, float, np.floating, np.integer)):
            return XSeries(self._t / float(other), self.x0)
        return NotImplemented

    def __rtruediv__(self, other):
        return XSeries.constant(other, self.order, self.x0) * series_recip(self)

    def at_energy(self, e, dtype=float):
        """Numeric Taylor coefficients at energy ``e``.

        Returns shape (order + 1,) for scalar ``e`` and (order + 1, m) for an
        array of m energies.
        """
        e = np.asarray(e, dtype=dtype)
        acc = np.zeros(self._t.shape[:1] + e.shape, dtype=dtype)
        for j in range(self._t.shape[1] - 1, -1, -1):
            col = self._t[:, j].reshape(self._t.shape[:1] + (1,) * e.ndim)
            acc = acc * e + col
        return acc

    def value(self, x, e):
        """Evaluate the truncated series at point ``x`` and energy ``e``."""
        coeffs = self.at_energy(e)
        u = float(x) - self.x0
        acc = np.zeros(coeffs.shape[1:])
        for row in coeffs[::-1]:
            acc = acc * u + row
        return float(acc) if acc.ndim == 0 else acc

    def allclose(self, other, atol=1e-12):
        if self.x0 != other.x0 or self.order != other.order:
            return False
        w = max(self._t.shape[1], other._t.shape[1])
        a = np.zeros((self.order + 1, w))
        b = np.zeros((self.order + 1, w))
        a[:, : self._t.shape[1]] = self._t
        b[:, : other._t.shape[1]] = other._t
        return bool(np.all(np.abs(a - b) <= atol))

    def __eq__(self, other):
        if not isinstance(other, XSeries):
            return NotImplemented
        return self.allclose(other, atol=0.0)

    def __hash__(self):
        return hash((self.x0, self._t.tobytes()))

    def __repr__(self):
        return f"XSeries(order={self.order}, x0={self.x0}, terms={self._t.tolist()})"


def series_mul(s, t):
    """Cauchy product truncated at the smaller order."""
    s._check(t)
    n = min(s.order, t.order) + 1
    return XSeries(kernels.cauchy2d(s.terms, t.terms, n), s.x0)


def series_diff(s):
    """d/du, consuming one order."""
    if s.order < 1:
        raise ValueError("order-0 series carries no derivative information")
    k = np.arange(1, s.order + 1)[:, None]
    return XSeries(s.terms[1:] * k, s.x0)


def series_recip(s):
    """1/s for a series whose constant term is a nonzero number.

    An E-dependent or vanishing constant term raises ``SingularCoefficient``.
    """
    c = s.terms[0]
    if np.any(c[1:] != 0.0):
        raise SingularCoefficient("denominator depends on E at the expansion point")
    c0 = float(c[0])
    if c0 == 0.0 or abs(c0) <= 1e-14 * s.max_abs():
        raise SingularCoefficient(f"denominator vanishes at x = {s.x0:g}")
    n = s.order + 1
    deg = s.terms.shape[1] - 1
    out = np.zeros((n, deg * (n - 1) + 1))
    out[0, 0] = 1.0 / c0
    for i in range(1, n):
        acc = np.zeros(out.shape[1])
        for j in range(1, i + 1):
            pr = np.convolve(s.terms[j], out[i - j])[: out.shape[1]]
            acc[: len(pr)] += pr
        out[i] = -acc / c0
    return XSeries(out, s.x0)


def series_at_x0(s):
    return s.term(0)
