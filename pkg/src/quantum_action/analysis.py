"""Effective-action comparison and finite-temperature observables.

Thermal averages are computed two ways: exactly from a spectrum, and from a
fitted quantum action through its closed-path actions S(x, x; beta hbar),

    <O> = int dx O(x) exp(-S(x,x)/hbar) / int dx exp(-S(x,x)/hbar),

which holds for observables diagonal in position.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError, TruncationError
from .fit import FitConfig, FitResult, boundary_pairs, classical_actions, fit_quantum_action, _map
from .model import ActionParams, PolynomialPotential
from .propagator import TRUNCATION_TOL, Spectrum

OBSERVABLES: dict[str, Callable] = {
    "1": lambda x: np.ones_like(x),
    "x": lambda x: x,
    "x2": lambda x: x * x,
    "x4": lambda x: x**4,
}


@dataclass(frozen=True)
class AnharmonicModel:
    """S = int m/2 xdot^2 + v2 x^2 + lam v4 x^4 (Euclidean)."""

    m: float = 1.0
    v2: float = 1.0
    v4: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if not (self.m > 0 and self.v2 > 0 and self.v4 > 0 and self.lam >= 0):
            raise InputError("need m, v2, v4 > 0 and lam >= 0")

    @property
    def omega(self) -> float:
        return math.sqrt(2 * self.v2 / self.m)

    def action(self, hbar: float = 1.0) -> ActionParams:
        return ActionParams(self.m, PolynomialPotential((0.0, 0.0, self.v2, 0.0, self.lam * self.v4)), hbar)


@dataclass(frozen=True)
class ThermalConfig:
    beta: float
    observable: Callable = OBSERVABLES["x2"]

    def __post_init__(self):
        if not self.beta > 0:
            raise InputError(f"beta must be positive, got {self.beta}")


def one_loop_coefficients(model: AnharmonicModel) -> tuple[float, float]:
    """One-loop shifts (dv2, dv4) = (3 g/(m w), 9 g^2/(m w^2)) with coupling g = lam v4."""
    g = model.lam * model.v4
    w = model.omega
    return 3 * g / (model.m * w), 9 * g * g / (model.m * w * w)


def effective_coefficients(model: AnharmonicModel) -> tuple[float, float]:
    """Quadratic and quartic coefficients of the one-loop effective potential."""
    d2, d4 = one_loop_coefficients(model)
    return model.v2 + d2, model.lam * model.v4 + d4


@dataclass(frozen=True)
class EffectiveRow:
    lam: float
    v2_eff: float
    v4_eff: float
    v2_qa: float
    v4_qa: float
    fit: FitResult | None = None

    @property
    def v2_gap(self) -> float:
        return abs(self.v2_qa - self.v2_eff)


def effective_vs_quantum_sweep(
    lambdas,
    T: float = 4.0,
    interval=(-1.0, 1.0),
    j_points: int = 6,
    base: AnharmonicModel = AnharmonicModel(),
    workers: int = 1,
    **config_kwargs,
) -> list[EffectiveRow]:
    """Compare one-loop effective coefficients with fitted quantum-action coefficients."""
    lambdas = [float(l) for l in lambdas]
    if any(l < 0 for l in lambdas):
        raise InputError("lambda must be non-negative")
    config_kwargs.setdefault("enforce_parity", True)

    def one(lam):
        model = AnharmonicModel(base.m, base.v2, base.v4, lam)
        act = model.action()
        r = fit_quantum_action(FitConfig(T, boundary_pairs(interval, j_points), **config_kwargs), act)
        v2e, v4e = effective_coefficients(model)
        return EffectiveRow(lam, v2e, v4e, r.params.coeffs[2], r.params.coeffs[4], r)

    return _map(one, lambdas, workers)


def _boltzmann(spectrum: Spectrum, beta: float, tol: float):
    w = np.exp(-beta * (spectrum.energies - spectrum.energies[0]))
    if not w[-1] / np.sum(w) < tol:
        raise TruncationError(f"{spectrum.n_states} states insufficient at beta={beta:g}")
    return w


def partition_function(spectrum: Spectrum, beta: float, tol: float = TRUNCATION_TOL) -> float:
    """sum_n exp(-beta E_n) over the retained states."""
    if not beta > 0:
        raise InputError("beta must be positive")
    w = _boltzmann(spectrum, beta, tol)
    return float(np.sum(w) * math.exp(-beta * spectrum.energies[0]))


def thermal_expectation_exact(spectrum: Spectrum, cfg: ThermalConfig, tol: float = TRUNCATION_TOL) -> float:
    """Tr[O exp(-beta H)] / Tr[exp(-beta H)] for a position-diagonal O."""
    w = _boltzmann(spectrum, cfg.beta, tol)
    o = cfg.observable(spectrum.grid.points)
    diag = np.sum(spectrum.wavefunctions**2 * o[None, :], axis=1) * spectrum.grid.spacing
    return float(np.dot(w, diag) / np.sum(w))


def thermal_expectation_quantum_action(
    params: ActionParams | FitResult,
    cfg: ThermalConfig,
    x_range=(-3.0, 3.0),
    n_x: int = 241,
    cutoff: float = 1e-8,
) -> float:
    """<O> from closed-path actions of a quantum action fitted at T = beta hbar.

    The x-range is widened until the Boltzmann-like integrand at both ends is
    below ``cutoff`` times its peak.
    """
    if isinstance(params, FitResult):
        params = params.params
    T = cfg.beta * params.hbar
    lo, hi = float(x_range[0]), float(x_range[1])
    for _ in range(8):
        x = np.linspace(lo, hi, n_x)
        s = classical_actions(params, x, x, T)
        w = np.exp(-(s - np.min(s)) / params.hbar)
        if w[0] < cutoff and w[-1] < cutoff:
            o = cfg.observable(x)
            return float(np.trapezoid(o * w, x) / np.trapezoid(w, x))
        lo, hi = 1.5 * lo, 1.5 * hi
    raise InputError("integrand does not decay inside the quadrature range")


def write_effective_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "v2_eff", "v4_eff", "v2_qa", "v4_qa"])
        for r in rows:
            w.writerow([f"{v:.17g}" for v in (r.lam, r.v2_eff, r.v4_eff, r.v2_qa, r.v4_qa)])


def write_thermal_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "O_exact", "O_quantum_action"])
        for beta, exact, qa in rows:
            w.writerow([f"{v:.17g}" for v in (beta, exact, qa)])
