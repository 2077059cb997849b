"""Asymptotic iteration method for coupled two-component ODE systems."""

from .engine import (
    CoefficientSet,
    Eigenvalue,
    SolveOptions,
    Spectrum,
    solve_spectrum,
    wavefunction_combination,
)
from .expr import load_model, parse_model
from .kernels import BACKEND
from .models import RabiParams, RashbaParams, rabi_spectrum, rashba_spectrum
from .rootfind import RootWindow

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CoefficientSet",
    "Eigenvalue",
    "RabiParams",
    "RashbaParams",
    "RootWindow",
    "SolveOptions",
    "Spectrum",
    "load_model",
    "parse_model",
    "rabi_spectrum",
    "rashba_spectrum",
    "solve_spectrum",
    "wavefunction_combination",
]
