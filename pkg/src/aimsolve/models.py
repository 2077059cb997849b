"""Built-in models: the Rabi two-level atom and the Rashba quantum dot.

Units: hbar = omega = m = 1 for Rabi; hbar = m* = confinement = 1 for
Rashba.  Both builders return a ``CoefficientSet`` ready for
``engine.solve_spectrum`` plus closed-form callables for wavefunctions.
"""

import math
from dataclasses import dataclass

import numpy as np

from .algebra import XSeries
from .engine import CoefficientSet, ExactCoefficients, SolveOptions, solve_spectrum
from .errors import DecoupledSystem
from .rootfind import RootWindow


def _position(order, x0, scale=1.0):
    # the series of x = x0 + scale * u
    terms = np.zeros((order + 1, 1))
    terms[0, 0] = x0
    if order >= 1:
        terms[1, 0] = scale
    return XSeries(terms, x0)


# ------------------------------------------------------------------- Rabi


@dataclass(frozen=True)
class RabiParams:
    omega0: float
    kappa: float


def rabi_exact(p):
    """Closed-form a0..d0 of the Rabi system in the Bargmann variable x."""
    w0, k = p.omega0, p.kappa
    r2 = math.sqrt(2.0)

    def den(x):
        return 2 * np.asarray(x) ** 2 - k * k

    def a0(x, E):
        return x * (2 * E - 1 + k * k - 2 * w0) / den(x)

    def b0(x, E):
        return k * (1 - 2 * E - 2 * np.asarray(x) ** 2 - 2 * w0) / (r2 * den(x))

    def c0(x, E):
        return x * (2 * E - 1 + k * k + 2 * w0) / den(x)

    def d0(x, E):
        return k * (1 - 2 * E - 2 * np.asarray(x) ** 2 + 2 * w0) / (r2 * den(x))

    pole = abs(k) / r2
    return ExactCoefficients(a0, b0, c0, d0, poles=(-pole, pole), denominators=(den,))


def rabi_coefficients(p, order=42):
    """Rabi coefficients expanded at x0 = 0, the extremum of the potential."""
    if p.kappa == 0:
        raise DecoupledSystem("kappa = 0 decouples the Rabi system; use rabi_decoupled")
    w0, k = p.omega0, p.kappa
    x = _position(order, 0.0)
    E = XSeries.energy(order)
    inv = 1.0 / (2 * x * x - k * k)
    s = k / math.sqrt(2.0)
    a0 = x * (2 * E + (k * k - 1 - 2 * w0)) * inv
    b0 = s * (-2 * E - 2 * x * x + (1 - 2 * w0)) * inv
    c0 = x * (2 * E + (k * k - 1 + 2 * w0)) * inv
    d0 = s * (-2 * E - 2 * x * x + (1 + 2 * w0)) * inv
    return CoefficientSet(a0, b0, c0, d0, 0.0, 1.0, rabi_exact(p), f"rabi(omega0={w0:g}, kappa={k:g})")


def rabi_exact_special(p, n):
    """Closed-form eigenvalue for the exactly solvable families, else None.

    omega0 = 0 gives the displaced oscillator n + 1/2 - kappa^2/2 (each
    level doubly degenerate); kappa = 0, omega0 = 1/2 gives E = n.
    """
    if p.omega0 == 0:
        return n + 0.5 - p.kappa ** 2 / 2
    if p.kappa == 0 and p.omega0 == 0.5:
        return float(n)
    return None


def rabi_decoupled(p, n_max):
    """Spectrum at kappa = 0: the ladders n + 1/2 -+ omega0 for n <= n_max.

    Same count as ``rabi_n_states``: coincident levels (omega0 = 0) appear
    once.
    """
    if p.kappa != 0:
        raise ValueError("rabi_decoupled needs kappa = 0")
    n = np.arange(n_max + 1)
    vals = np.concatenate([n + 0.5 - p.omega0, n + 0.5 + p.omega0])
    if p.omega0 == 0:
        vals = n + 0.5
    return [float(v) for v in np.sort(vals)]


def rabi_window(p, n_max):
    return RootWindow(-(abs(p.omega0) + p.kappa ** 2 + 2), n_max + 3)


def rabi_n_states(p, n_max):
    # with omega0 = 0 each level is doubly degenerate and shows up once
    return n_max + 1 if p.omega0 == 0 else 2 * (n_max + 1)


def rabi_spectrum(p, n_max, opts=None, order=None):
    """Lowest Rabi eigenvalues by AIM (kappa != 0)."""
    opts = opts or SolveOptions()
    base = dict(opts.__dict__)
    base["window"] = opts.window or rabi_window(p, n_max)
    base["n_states"] = opts.n_states or rabi_n_states(p, n_max)
    opts = SolveOptions(**base)
    c = rabi_coefficients(p, order or opts.max_iter + 2)
    return solve_spectrum(c, opts)


# ----------------------------------------------------------------- Rashba


@dataclass(frozen=True)
class RashbaParams:
    lambdaR: float
    B: float
    k: int
    gmu: float = 1.0
    echarge: float = 1.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError("k must be a nonnegative integer")

    @property
    def omega_c(self):
        return self.echarge * self.B

    @property
    def omega(self):
        return math.sqrt(1 + (self.omega_c / 2) ** 2)


def rashba_exact(p):
    """Closed-form a0..d0 of the Rashba system in z."""
    lam, B, k, gmu = p.lambdaR, p.B, p.k, p.gmu
    wc, w = p.omega_c, p.omega
    L2 = lam * lam

    def den(z):
        return 4 * w * w * np.asarray(z) + L2

    def a0(z, E):
        return w * (2 * E + L2 + B * gmu - wc * k - 2 * w * (k + 1)) / den(z)

    def b0(z, E):
        return lam * (-2 * E + B * gmu + wc * (k + 1) - 2 * w * k + 4 * w * w * z) / (2 * den(z))

    def c0(z, E):
        num = w * z * (2 * E - B * gmu - wc * (k + 1) - 2 * w * (k + 2)) - L2 * (1 + k - w * z)
        return num / (z * den(z))

    def d0(z, E):
        return lam * (2 * E + B * gmu - wc * k - 2 * w * (k + 1) - 4 * w * w * z) / (2 * z * den(z))

    return ExactCoefficients(a0, b0, c0, d0, poles=(-L2 / (4 * w * w), 0.0), denominators=(den, lambda z: z))


def rashba_expansion_point(p):
    """Midpoint between the two singular points z = -lambda^2/(4 w^2) and 0."""
    return -p.lambdaR ** 2 / (8 * p.omega ** 2)


def rashba_coefficients(p, order=42, z0=None):
    """Rashba coefficients expanded midway between the singular points.

    z = 0 is a regular singular point of the system, so the expansion sits
    at the midpoint z0 of the segment joining it to the other pole.  The
    series variable is scaled by |z0| so its convergence radius is 1
    whatever the coupling strength.  Another ``z0`` may be given; the
    scale is then its distance to the nearer singular point.
    """
    if p.lambdaR == 0:
        raise DecoupledSystem("lambdaR = 0 decouples the Rashba system; use rashba_decoupled_oracle")
    lam, B, k, gmu = p.lambdaR, p.B, p.k, p.gmu
    wc, w = p.omega_c, p.omega
    L2 = lam * lam
    pole = -L2 / (4 * w * w)
    if z0 is None:
        z0 = rashba_expansion_point(p)
    rho = min(abs(z0), abs(z0 - pole))
    if rho == 0:
        raise ValueError("expansion point sits on a singular point")
    z = _position(order, z0, rho)
    E = XSeries.energy(order, z0)
    inv1 = 1.0 / (4 * w * w * z + L2)
    inv2 = inv1 * (1.0 / z)
    up = B * gmu - wc * k - 2 * w * (k + 1)
    a0 = w * (2 * E + (L2 + up)) * inv1
    b0 = (lam / 2) * (-2 * E + 4 * w * w * z + (B * gmu + wc * (k + 1) - 2 * w * k)) * inv1
    c0 = (w * z * (2 * E - (B * gmu + wc * (k + 1) + 2 * w * (k + 2))) + L2 * w * z - L2 * (1 + k)) * inv2
    d0 = (lam / 2) * (2 * E - 4 * w * w * z + up) * inv2
    label = f"rashba(lambda={lam:g}, B={B:g}, k={k})"
    return CoefficientSet(rho * a0, rho * b0, rho * c0, rho * d0, z0, rho, rashba_exact(p), label)


def rashba_singular_root(p):
    """Energy at which b0 vanishes at z = 0.

    delta1 acquires a root here that is an artefact of the singular point,
    not a state of the dot; it does not depend on lambdaR.
    """
    return (p.B * p.gmu + p.omega_c * (p.k + 1)) / 2 - p.omega * p.k


def rashba_branches(p, n_max):
    """Decoupled (lambdaR = 0) up and down ladders, n_max + 1 levels each."""
    w, wc, k = p.omega, p.omega_c, p.k
    m = np.arange(n_max + 1)
    up = w * (2 * m + k + 1) + k * wc / 2 - p.gmu * p.B / 2
    down = w * (2 * m + k + 2) + (k + 1) * wc / 2 + p.gmu * p.B / 2
    return up, down


def rashba_decoupled_oracle(p, n_max):
    """Lowest n_max + 1 levels of the merged decoupled spectrum."""
    up, down = rashba_branches(p, n_max)
    return [float(v) for v in np.sort(np.concatenate([up, down]))[: n_max + 1]]


def rashba_window(p, n_max):
    return RootWindow(-(p.k + p.B + 4), 2 * n_max + p.k + 6)


# delta1 roots this close to the singular-point energy are not states
SINGULAR_RADIUS = 0.25


def rashba_spectrum(p, n_max, opts=None, order=None):
    """Lowest n_max + 1 Rashba states by AIM (lambdaR != 0).

    The singular-point root of delta1 is excluded from tracking; whatever
    delta1 had near it at the last level is kept in ``Spectrum.excluded``.
    """
    opts = opts or SolveOptions()
    base = dict(opts.__dict__)
    base["window"] = opts.window or rashba_window(p, n_max)
    base["n_states"] = opts.n_states or n_max + 1
    base["exclude"] = tuple(opts.exclude) + ((1, rashba_singular_root(p), SINGULAR_RADIUS),)
    opts = SolveOptions(**base)
    c = rashba_coefficients(p, order or opts.max_iter + 2)
    return solve_spectrum(c, opts)
