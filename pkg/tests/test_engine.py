import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import rabi_ed, rashba_ed
from scipy.integrate import quad

from aimsolve import kernels
from aimsolve.algebra import EnergyPoly, XSeries, series_at_x0
from aimsolve.engine import (
    AimLevel,
    CoefficientSet,
    ExactCoefficients,
    SolveOptions,
    delta,
    delta_at,
    gamma_at,
    init_level,
    iterate,
    solve_spectrum,
    sweep,
    wavefunction_combination,
)
from aimsolve.errors import (
    DecoupledSystem,
    GammaSingular,
    NoConvergenceWarning,
    OrderExhausted,
    PoleOnGrid,
)
from aimsolve.models import (
    RabiParams,
    RashbaParams,
    rabi_coefficients,
    rabi_n_states,
    rabi_spectrum,
    rabi_window,
    rashba_spectrum,
)
from aimsolve.rootfind import RootWindow, real_roots

E = EnergyPoly.energy()


def rabi(w0, k, order=30):
    return rabi_coefficients(RabiParams(w0, k), order)


def scaled_level(lv, s, t):
    return AimLevel(lv.n, lv.a * s, lv.b * s, lv.c * t, lv.d * t, lv.scale)


# -------------------------------------------------------------- examples


def test_init_level():
    c = rabi(0.0, 1.0, 12)
    lv = init_level(c)
    assert lv.n == 0 and lv.scale == 1.0
    assert series_at_x0(lv.a).is_zero()
    assert lv.valid_order == 12


def test_iterate_first_level_by_hand():
    c = rabi(0.0, 1.0, 12)
    lv = iterate(init_level(c), c, rescale=False)
    expect = (2 * E - 1) * (2 * E - 1) / 2 - 2 * E
    got = series_at_x0(lv.a)
    np.testing.assert_allclose(got.coeffs, expect.coeffs, atol=1e-14)
    assert lv.n == 1


def test_iterate_rescales_jointly():
    c = rabi(0.5, 0.7, 12)
    raw = iterate(init_level(c), c, rescale=False)
    lv = iterate(init_level(c), c)
    big = max(s.max_abs() for s in (raw.a, raw.b, raw.c, raw.d))
    assert lv.scale == pytest.approx(1 / big)
    assert lv.b.allclose(raw.b / big, atol=1e-15)
    assert max(s.max_abs() for s in (lv.a, lv.b, lv.c, lv.d)) == pytest.approx(1.0)


def test_iterate_zero_and_doubling():
    c = rabi(0.5, 0.7, 12)
    lv = iterate(init_level(c), c)
    zero = scaled_level(lv, 0.0, 0.0)
    nxt = iterate(zero, c, rescale=False)
    assert all(s.is_zero() for s in (nxt.a, nxt.b, nxt.c, nxt.d))
    one = iterate(lv, c, rescale=False)
    two = iterate(scaled_level(lv, 2.0, 1.0), c, rescale=False)
    assert two.a.allclose(one.a * 2, atol=1e-12)
    assert two.b.allclose(one.b * 2, atol=1e-12)
    assert two.c.allclose(one.c, atol=1e-12)


def test_iterate_exhausts_order():
    c = rabi(0.5, 0.7, 3)
    lv = init_level(c)
    for _ in range(3):
        lv = iterate(lv, c)
    assert lv.valid_order == 0
    with pytest.raises(OrderExhausted):
        iterate(lv, c)


def test_delta_needs_consecutive_levels():
    c = rabi(0.5, 0.7, 6)
    lv = init_level(c)
    with pytest.raises(ValueError):
        delta(lv, iterate(iterate(lv, c), c))


def test_delta_shrinks_at_exact_eigenvalues():
    # omega0 = 0, kappa = 1: E = n exactly
    c = rabi(0.0, 1.0, 20)
    prev = iterate(init_level(c), c)
    vals = {e: [] for e in (0.0, 1.0, 2.0)}
    for _ in range(2, 10):
        cur = iterate(prev, c)
        d1, _ = delta(prev, cur)
        for e in vals:
            vals[e].append(abs(d1(e)))
        prev = cur
    for e, v in vals.items():
        assert np.all(np.diff(v) < 0), e


def test_delta_scale_invariance_example():
    c = rabi(0.5, 0.5, 12)
    prev = iterate(init_level(c), c)
    cur = iterate(prev, c)
    d1, d2 = delta(prev, cur)
    s1, s2 = delta(scaled_level(prev, 3.0, 3.0), scaled_level(cur, 0.25, 0.25))
    np.testing.assert_allclose(s1.coeffs, d1.coeffs, atol=1e-13)
    np.testing.assert_allclose(s2.coeffs, d2.coeffs, atol=1e-13)


def decoupled_set(order=8):
    x = XSeries.variable(order)
    zero = XSeries.constant(0.0, order)
    return CoefficientSet(-x, zero, -x + E, zero)


def test_decoupled_system():
    c = decoupled_set()
    prev = init_level(c)
    d1, d2 = delta(prev, iterate(prev, c))
    assert d1.is_zero()
    with pytest.raises(DecoupledSystem):
        solve_spectrum(c, window=RootWindow(-1, 1))


def test_coefficient_set_checks():
    x = XSeries.variable(4)
    with pytest.raises(ValueError):
        CoefficientSet(x, x, x, XSeries.variable(3))
    with pytest.raises(Exception):
        CoefficientSet(x, x, x, XSeries.variable(4, 1.0))


def test_solve_requires_window_and_order():
    c = rabi(0.5, 0.5, 10)
    with pytest.raises(ValueError):
        solve_spectrum(c, max_iter=10)
    with pytest.raises(OrderExhausted):
        solve_spectrum(c, max_iter=20, window=RootWindow(-2, 3))


def test_solve_rabi_exact_family():
    s = rabi_spectrum(RabiParams(0.0, 0.5), 5)
    assert s.converged
    np.testing.assert_allclose(s.values()[:6], np.arange(6) + 0.375, atol=1e-8)
    assert np.all(np.diff(s.values()) > 0)


def test_solve_rabi_ground_pair():
    s = rabi_spectrum(RabiParams(0.5, 0.5), 0)
    # the reference prints -0.064513 for -0.0645140 (truncated, not rounded)
    np.testing.assert_allclose(s.values()[:2], [-0.064513, 0.5865567], atol=1e-6)
    np.testing.assert_allclose(s.values()[:2], rabi_ed(0.5, 0.5)[:2], atol=1e-9)
    for ev in s:
        assert ev.drift <= 1e-8
        assert ev.residual < 1e-6
        assert ev.branch in ("1", "2", "both")


def test_solve_rashba_example():
    # the reference row n=0 is the singular-point energy, not a state, so
    # its row n=1 is the lowest physical level
    s = rashba_spectrum(RashbaParams(0.5, 0.0, 0), 1)
    assert s.values()[0] == pytest.approx(0.7737872, abs=5e-7)
    np.testing.assert_allclose(s.values()[:2], rashba_ed(0.5, 0.0, 0)[:2], atol=1e-8)


def test_polynomial_route_agrees():
    p = RabiParams(0.5, 0.5)
    opts = SolveOptions(max_iter=20, window=rabi_window(p, 0), n_states=2)
    c = rabi_coefficients(p, 22)
    poly = solve_spectrum(c, opts, method="polynomial")
    point = solve_spectrum(c, opts)
    np.testing.assert_allclose(poly.values()[:2], point.values()[:2], atol=1e-8)


def test_nonconvergence_is_flagged():
    p = RabiParams(0.5, 1.0)
    with pytest.warns(NoConvergenceWarning):
        s = rabi_spectrum(p, 5, SolveOptions(max_iter=8))
    assert not s.converged
    assert s.unconverged
    assert s.iterations_used == 8


def test_sweep_shapes_and_delta_at():
    c = rabi(0.5, 0.5, 12)
    e = np.linspace(-1, 2, 7)
    d1, m1, d2, m2 = sweep(c, e, 6)
    assert d1.shape == (7, 7)
    assert np.all(np.isnan(d1[0]))
    r1, r2 = delta_at(c, e, 6)
    assert np.all(np.abs(r1) <= 1 + 1e-12)


def test_kernels_agree():
    from aimsolve import _kernels_py

    c = rabi(0.3, 0.8, 30)
    coeffs = c.at_energy(np.linspace(-2, 4, 50), dtype=np.longdouble)
    ref = _kernels_py.level_values(*coeffs, 30)
    got = kernels.level_values(*coeffs, 30)
    # summation order differs, and the recurrence amplifies rounding on the top rows
    for a, b in zip(ref, got):
        a, b = np.asarray(a, float), np.asarray(b, float)
        row = np.abs(a).max(axis=1, keepdims=True)
        assert np.all(np.abs(a - b) <= 1e-10 * row)
        np.testing.assert_allclose(a[:10], b[:10], rtol=1e-14, atol=1e-16 * row[:10].max())


# ---------------------------------------------------------- wavefunctions

GRID = np.linspace(0.0, 1.0, 101)


def test_wavefunction_exact_ground_state():
    c = rabi(0.0, 0.5, 42)
    w = wavefunction_combination(c, 0.375, grid=GRID)
    np.testing.assert_allclose(w.values, np.exp(-GRID / (2 * math.sqrt(2))), atol=1e-6)
    assert w.gamma == pytest.approx(1.0, abs=1e-9)
    assert w.values[0] == 1.0


def test_wavefunction_gamma_from_level():
    c = rabi(0.0, 0.5, 42)
    lv = init_level(c)
    for _ in range(30):
        lv = iterate(lv, c)
    w = wavefunction_combination(c, 0.375, level=lv, grid=GRID)
    np.testing.assert_allclose(w.values, np.exp(-GRID / (2 * math.sqrt(2))), atol=1e-6)


def test_wavefunction_ode_residual():
    grid = np.linspace(0.0, 1.0, 2001)
    c = rabi(0.0, 0.5, 42)
    w = wavefunction_combination(c, 0.375, grid=grid)
    ex = c.exact
    with np.errstate(all="ignore"):
        rate = ex.a0(grid, 0.375) + w.gamma * ex.d0(grid, 0.375)
    inner = slice(2, -2)
    ok = np.isfinite(rate)
    dphi = np.gradient(w.values, grid)
    resid = np.abs(dphi - rate * w.values)
    assert np.all(resid[inner][ok[inner]] <= 1e-6 * np.abs(w.values[inner][ok[inner]]))


def test_wavefunction_gamma_zero():
    c = rabi(0.5, 0.5, 12)
    grid = np.linspace(0.0, 0.2, 81)
    w = wavefunction_combination(c, 0.2, grid=grid, gamma=0.0)
    expect = np.exp([quad(lambda x: c.exact.a0(x, 0.2), 0.0, x, epsabs=1e-13)[0] for x in grid])
    np.testing.assert_allclose(w.values, expect, rtol=1e-7)


def test_wavefunction_pole_on_grid():
    c = rabi(0.3, 0.5, 42)
    with pytest.raises(PoleOnGrid) as err:
        wavefunction_combination(c, 0.2, grid=GRID, gamma=0.7)
    assert err.value.x == pytest.approx(0.5 / math.sqrt(2), abs=1e-4)


def test_wavefunction_bad_grid():
    c = rabi(0.0, 0.5, 12)
    with pytest.raises(ValueError):
        wavefunction_combination(c, 0.375, grid=[0.0], gamma=1.0)
    with pytest.raises(ValueError):
        wavefunction_combination(c, 0.375, grid=[0.0, 0.2, 0.1], gamma=1.0)


def test_gamma_singular():
    one = XSeries.constant(1.0, 6)
    zero = XSeries.constant(0.0, 6)
    # a_n stays zero, so b_n / a_n has no limit
    c = CoefficientSet(zero, one, zero, zero,
                       exact=ExactCoefficients(*(lambda x, e: 0 * x,) * 4, poles=()))
    with pytest.raises(GammaSingular):
        gamma_at(c, 0.0, 4)


def test_rashba_gamma_product():
    # the two branch ratios are reciprocal at an eigenvalue
    p = RashbaParams(0.5, 0.0, 0)
    s = rashba_spectrum(p, 1)
    from aimsolve.models import rashba_coefficients

    c = rashba_coefficients(p, 42)
    g1 = gamma_at(c, s.values()[1], 40, 1)
    g2 = gamma_at(c, s.values()[1], 40, 2)
    assert g1 * g2 == pytest.approx(1.0, abs=1e-5)


# ------------------------------------------------------------- properties


@st.composite
def coefficient_sets(draw, order=8):
    def one():
        rows = draw(st.lists(st.lists(st.floats(-1, 1), min_size=2, max_size=2),
                             min_size=order + 1, max_size=order + 1))
        return XSeries(np.array(rows))

    return CoefficientSet(one(), one(), one(), one())


@pytest.mark.property
@settings(max_examples=120, deadline=None)
@given(coefficient_sets(), st.integers(0, 4), st.floats(0.1, 10), st.floats(0.1, 10))
def test_recurrence_linearity(c, n, s, t):
    lv = init_level(c)
    for _ in range(n):
        lv = iterate(lv, c)
    base = iterate(lv, c, rescale=False)
    moved = iterate(scaled_level(lv, s, t), c, rescale=False)
    tol = 1e-12 * max(1.0, s, t) * max(1.0, base.a.max_abs(), base.b.max_abs(), base.c.max_abs(), base.d.max_abs())
    assert moved.a.allclose(base.a * s, atol=tol)
    assert moved.b.allclose(base.b * s, atol=tol)
    assert moved.c.allclose(base.c * t, atol=tol)
    assert moved.d.allclose(base.d * t, atol=tol)


# omega0 = 0 makes the roots come in near-double pairs that a sign scan
# resolves only by luck (documented limitation), so start at 0.1
@pytest.mark.property
@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 1.2), st.floats(0.1, 1.0), st.integers(2, 6),
       st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_delta_roots_invariant_under_rescaling(kappa, w0, n, s, t):
    c = rabi(w0, kappa, 8)
    prev = init_level(c)
    for _ in range(n - 1):
        prev = iterate(prev, c)
    cur = iterate(prev, c)
    w = rabi_window(RabiParams(w0, kappa), 2)
    w = RootWindow(w.lo, w.hi, 0.005)
    poly = delta(prev, cur)[0]
    base = real_roots(poly, w, 1e-11)
    moved = real_roots(delta(scaled_level(prev, s, s), scaled_level(cur, t, t))[0], w, 1e-11)
    assert len(base) == len(moved)
    # close pairs are ill-conditioned: allow the rounding-level shift
    a = np.polynomial.Polynomial(np.asarray(poly.coeffs, dtype=float))
    mag = np.polynomial.Polynomial(np.abs(a.coef))
    cond = mag(np.abs(base)) / np.abs(a.deriv()(base))
    assert np.all(np.abs(np.asarray(moved) - base) <= 1e-9 + 1e-12 * cond)


def coarse(p):
    w = rabi_window(p, 0)
    return SolveOptions(window=RootWindow(w.lo, w.hi, 0.02))


@pytest.mark.property
@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 1.2), st.floats(0.0, 1.0))
def test_branch_agreement(kappa, w0):
    p = RabiParams(w0, kappa)
    s = rabi_spectrum(p, 0, coarse(p))
    low = s.eigenvalues[: rabi_n_states(p, 0)]
    assert s.converged
    # "both" means the two branch roots met within 10 * conv_tol
    assert all(ev.branch == "both" for ev in low)


@pytest.mark.property
@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 1.2), st.floats(0.0, 1.0))
def test_spectrum_parity_in_kappa(kappa, w0):
    plus = rabi_spectrum(RabiParams(w0, kappa), 0, coarse(RabiParams(w0, kappa)))
    minus = rabi_spectrum(RabiParams(w0, -kappa), 0, coarse(RabiParams(w0, kappa)))
    n = rabi_n_states(RabiParams(w0, kappa), 0)
    np.testing.assert_allclose(minus.values()[:n], plus.values()[:n], atol=1e-8)


def test_drift_mostly_monotone():
    checks = fails = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergenceWarning)
        spectra = [rabi_spectrum(RabiParams(w0, k), 3) for w0, k in ((0.5, 0.5), (1.0, 0.75), (0.5, 1.0))]
    for s in spectra:
        for ev in s:
            h = ev.drift_history
            for i in range(len(h) - 2):
                checks += 1
                fails += h[i + 2] > h[i]
    assert checks > 50
    assert fails <= 0.1 * checks
