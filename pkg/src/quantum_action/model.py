"""Polynomial potentials, actions and the double-well parameterization.

Units follow the m = hbar = 1 convention unless an :class:`ActionParams`
carries explicit values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NotDoubleWell, ParityViolation

DEGREE = 4
PARITY_TOL = 0.01


@dataclass(frozen=True)
class PolynomialPotential:
    """V(x) = sum_k coeffs[k] x**k with degree <= 4."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) != DEGREE + 1:
            raise InputError(f"expected {DEGREE + 1} coefficients, got {len(c)}")
        if not all(math.isfinite(v) for v in c):
            raise InputError(f"non-finite coefficient in {c}")
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        return eval_potential(self, x)

    def derivative(self, x):
        return eval_potential_derivative(self, x)

    def second_derivative(self, x):
        v = self.coeffs
        x = np.asarray(x, dtype=float)
        return 2 * v[2] + 6 * v[3] * x + 12 * v[4] * x * x

    def shifted(self, v0: float) -> "PolynomialPotential":
        """Same potential with the constant coefficient replaced by ``v0``."""
        return PolynomialPotential((v0,) + self.coeffs[1:])

    def to_json(self) -> str:
        return json.dumps(list(self.coeffs))

    @classmethod
    def from_json(cls, text: str) -> "PolynomialPotential":
        return cls(tuple(json.loads(text)))


@dataclass(frozen=True)
class ActionParams:
    """Euclidean action: mass, potential and hbar.

    Describes either the bare action or a fitted quantum action.
    """

    mass: float
    potential: PolynomialPotential
    hbar: float = 1.0

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise InputError(f"mass must be positive, got {self.mass}")
        if not (self.hbar > 0 and math.isfinite(self.hbar)):
            raise InputError(f"hbar must be positive, got {self.hbar}")
        if not isinstance(self.potential, PolynomialPotential):
            object.__setattr__(self, "potential", PolynomialPotential(tuple(self.potential)))

    @property
    def coeffs(self) -> tuple[float, ...]:
        return self.potential.coeffs

    def to_dict(self) -> dict:
        return {"mass": self.mass, "hbar": self.hbar, "coeffs": list(self.coeffs)}

    @classmethod
    def from_dict(cls, d: dict) -> "ActionParams":
        return cls(float(d["mass"]), PolynomialPotential(tuple(d["coeffs"])), float(d.get("hbar", 1.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ActionParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DoubleWellForm:
    """V(x) = amplitude**2 (x**2 - half_separation**2)**2, minima at +-half_separation."""

    amplitude: float
    half_separation: float

    def __post_init__(self):
        if not (self.amplitude > 0 and self.half_separation > 0):
            raise InputError(
                f"double-well fields must be positive, got A={self.amplitude}, a={self.half_separation}"
            )

    @property
    def barrier_height(self) -> float:
        return self.amplitude**2 * self.half_separation**4


def eval_potential(p: PolynomialPotential, x):
    """Evaluate the polynomial at scalar or array ``x`` (Horner scheme)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for c in reversed(p.coeffs):
        out = out * x + c
    return out if out.ndim else float(out)


def eval_potential_derivative(p: PolynomialPotential, x):
    v = p.coeffs
    x = np.asarray(x, dtype=float)
    out = v[1] + x * (2 * v[2] + x * (3 * v[3] + x * 4 * v[4]))
    return out if out.ndim else float(out)


def to_double_well(p: PolynomialPotential, parity_tol: float = PARITY_TOL) -> DoubleWellForm:
    """Read off (A, a) from a parity-symmetric quartic with a central barrier.

    The constant coefficient is dropped; odd coefficients must be below
    ``parity_tol`` in magnitude and are otherwise ignored.
    """
    v0, v1, v2, v3, v4 = p.coeffs
    if abs(v1) > parity_tol or abs(v3) > parity_tol:
        raise ParityViolation(f"odd coefficients v1={v1}, v3={v3} exceed {parity_tol}")
    if v4 <= 0 or v2 >= 0:
        raise NotDoubleWell(f"need v4 > 0 and v2 < 0, got v2={v2}, v4={v4}")
    return DoubleWellForm(math.sqrt(v4), math.sqrt(-v2 / (2 * v4)))


def from_double_well(d: DoubleWellForm) -> PolynomialPotential:
    A2 = d.amplitude**2
    a2 = d.half_separation**2
    return PolynomialPotential((A2 * a2 * a2, 0.0, -2 * A2 * a2, 0.0, A2))


def double_well_potential() -> PolynomialPotential:
    """V(x) = 1/2 - x**2 + x**4/2, i.e. A = 1/sqrt(2), a = 1."""
    return PolynomialPotential((0.5, 0.0, -1.0, 0.0, 0.5))


def harmonic_potential(mass: float = 1.0, omega: float = 1.0) -> PolynomialPotential:
    return PolynomialPotential((0.0, 0.0, 0.5 * mass * omega**2, 0.0, 0.0))
