"""Euclidean propagator <x_f| exp(-H T / hbar) |x_i> for 1-D Hamiltonians.

Two independent routes are provided: a spectral sum over finite-difference
eigenstates and an imaginary-time transfer matrix built from the short-time
kernel. Both live on a uniform :class:`SpatialGrid`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, InputError, LeakageError, OutOfGrid, StepError, TruncationError
from .model import ActionParams

LEAKAGE_TOL = 1e-8
TRUNCATION_TOL = 1e-8
DEFAULT_STATES = 30
MAX_STEP_POTENTIAL = 5.0
# rounding amplification assumed per unit of sum(|terms|)/|sum|
CANCELLATION_EPS = 1e3 * np.finfo(float).eps


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float = -10.0
    x_max: float = 10.0
    n_points: int = 2001

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise InputError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.n_points < 3:
            raise InputError("grid needs at least 3 points")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @cached_property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.x_min) & (x <= self.x_max)))

    def snap(self, x):
        """Nearest grid node(s) to ``x``."""
        return self.points[self.nearest_index(x)]

    def nearest_index(self, x):
        x = np.asarray(x, dtype=float)
        if not self.contains(x):
            raise OutOfGrid(f"point(s) outside [{self.x_min}, {self.x_max}]")
        return np.rint((x - self.x_min) / self.spacing).astype(int)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Lowest eigenpairs of a grid Hamiltonian.

    ``wavefunctions`` has shape (K, n_points) with the boundary nodes set to
    zero and sum(psi**2) * spacing == 1 for every row.
    """

    energies: np.ndarray
    wavefunctions: np.ndarray
    grid: SpatialGrid
    hbar: float = 1.0

    @property
    def n_states(self) -> int:
        return len(self.energies)

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def time_scale(self) -> float:
        """hbar / E_0."""
        return self.hbar / self.ground_energy

    def interpolate(self, x) -> np.ndarray:
        """Linear interpolation of all wavefunctions; shape (K,) + shape(x)."""
        g = self.grid
        x = np.asarray(x, dtype=float)
        if not g.contains(x):
            raise OutOfGrid(f"point(s) outside [{g.x_min}, {g.x_max}]")
        u = (x - g.x_min) / g.spacing
        i = np.clip(np.floor(u).astype(int), 0, g.n_points - 2)
        w = u - i
        return self.wavefunctions[:, i] * (1 - w) + self.wavefunctions[:, i + 1] * w


def _hamiltonian_bands(action: ActionParams, grid: SpatialGrid):
    """Diagonal and off-diagonal of the three-point Hamiltonian on interior nodes."""
    h = grid.spacing
    kin = action.hbar**2 / (2 * action.mass * h * h)
    x = grid.points[1:-1]
    diag = 2 * kin + action.potential(x)
    off = np.full(len(x) - 1, -kin)
    return diag, off


def hamiltonian_matrix(action: ActionParams, grid: SpatialGrid) -> np.ndarray:
    """Dense interior Hamiltonian (for small grids and test oracles)."""
    d, e = _hamiltonian_bands(action, grid)
    return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)


def _fix_sign(psi: np.ndarray) -> np.ndarray:
    # positive at the first lobe: the first local maximum of |psi| above noise
    a = np.abs(psi)
    big = a > 1e-3 * a.max()
    peak = (a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:]) & big[1:-1]
    idx = np.flatnonzero(peak)
    i = idx[0] + 1 if idx.size else int(np.argmax(a))
    return psi if psi[i] > 0 else -psi


def solve_spectrum(
    action: ActionParams,
    grid: SpatialGrid = SpatialGrid(),
    k: int = DEFAULT_STATES,
    leakage_tol: float = LEAKAGE_TOL,
) -> Spectrum:
    """Lowest ``k`` eigenpairs of H = -(hbar^2/2m) d^2/dx^2 + V with Dirichlet walls.

    Raises
    ------
    LeakageError
        If a retained state is not negligible next to the walls.
    ConvergenceError
        If the tridiagonal eigensolver fails.
    """
    if k < 1:
        raise InputError("k must be >= 1")
    n_int = grid.n_points - 2
    if k > n_int:
        raise InputError(f"k={k} exceeds the {n_int} interior grid points")
    d, e = _hamiltonian_bands(action, grid)
    try:
        w, v = linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    except (linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(str(exc)) from exc

    psi = np.zeros((k, grid.n_points))
    psi[:, 1:-1] = v.T / math.sqrt(grid.spacing)
    for n in range(k):
        psi[n] = _fix_sign(psi[n])
    leak = np.maximum(np.abs(psi[:, 1]), np.abs(psi[:, -2]))
    bad = np.flatnonzero(leak >= leakage_tol)
    if bad.size:
        raise LeakageError(
            f"state {bad[0]} has boundary amplitude {leak[bad[0]]:.3g} >= {leakage_tol:g}; enlarge the grid"
        )
    return Spectrum(np.asarray(w), psi, grid, action.hbar)


def _spectral_sum(spectrum: Spectrum, x_i, x_f, T: float, tol: float):
    """Reduced sum sum_n psi_n psi_n exp(-(E_n - E_0) T/hbar) with truncation and cancellation checks."""
    if not T > 0:
        raise InputError(f"T must be positive, got {T}")
    pi = spectrum.interpolate(x_i)
    pf = spectrum.interpolate(x_f)
    w = np.exp(-(spectrum.energies - spectrum.energies[0]) * T / spectrum.hbar)
    # pi * pf first keeps the kernel bitwise symmetric
    terms = w.reshape((-1,) + (1,) * (pi.ndim - 1)) * (pi * pf)
    reduced = np.sum(terms, axis=0)
    # envelope of the last retained term; immune to accidental nodes at x_i or x_f
    last = np.max(spectrum.wavefunctions[-1] ** 2) * w[-1]
    with np.errstate(divide="ignore"):
        ratio = last / np.min(np.abs(reduced))
    if not ratio < tol:
        raise TruncationError(
            f"{spectrum.n_states} states insufficient at T={T:g}: last-term ratio {ratio:.3g} >= {tol:g}"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.max(np.sum(np.abs(terms), axis=0) / np.abs(reduced))
    if not cond * CANCELLATION_EPS < tol:
        raise TruncationError(
            f"spectral sum lost to cancellation at T={T:g} (condition {cond:.3g}); use the transfer matrix"
        )
    return reduced


def propagator_spectral(spectrum: Spectrum, x_i, x_f, T: float, tol: float = TRUNCATION_TOL):
    """G(x_f, T; x_i, 0) = sum_n psi_n(x_f) psi_n(x_i) exp(-E_n T / hbar).

    ``x_i`` and ``x_f`` may be arrays (broadcast together); wavefunctions are
    interpolated linearly between nodes.

    Raises
    ------
    TruncationError
        If the last retained state is not negligible at this ``T``, or if
        the sum cancels below double-precision resolution (far-apart points
        at short times).
    """
    reduced = _spectral_sum(spectrum, x_i, x_f, T, tol)
    out = reduced * math.exp(-spectrum.energies[0] * T / spectrum.hbar)
    return out if np.ndim(out) else float(out)


def log_propagator_spectral(spectrum: Spectrum, x_i, x_f, T: float, tol: float = TRUNCATION_TOL):
    """ln G, without underflow of the exp(-E_0 T) factor."""
    reduced = _spectral_sum(spectrum, x_i, x_f, T, tol)
    if np.any(reduced <= 0):
        raise TruncationError("non-positive spectral sum")
    out = np.log(reduced) - spectrum.energies[0] * T / spectrum.hbar
    return out if np.ndim(out) else float(out)


def propagator_dense(action: ActionParams, grid: SpatialGrid, T: float) -> np.ndarray:
    """exp(-H T / hbar) / spacing on interior nodes via a dense matrix exponential.

    Independent of the eigensolver; used as a brute-force oracle.
    """
    H = hamiltonian_matrix(action, grid)
    return linalg.expm(-H * T / action.hbar) / grid.spacing


def propagator_transfer(action: ActionParams, grid: SpatialGrid, T: float, n_slices: int) -> np.ndarray:
    """Euclidean kernel on all grid-node pairs from ``n_slices`` short-time steps.

    The step kernel is the symmetric (trapezoid-in-time) Gaussian
    sqrt(m / 2 pi hbar dt) exp(-[m (x-x')^2 / 2dt + dt (V(x)+V(x'))/2] / hbar),
    and intermediate integrations use the node spacing as weight.
    """
    if not T > 0:
        raise InputError(f"T must be positive, got {T}")
    if n_slices < 1:
        raise InputError("n_slices must be >= 1")
    m, hbar = action.mass, action.hbar
    dt = T / n_slices
    x = grid.points
    V = action.potential(x)
    if dt * np.max(np.abs(V)) > MAX_STEP_POTENTIAL:
        raise StepError(
            f"dt*max|V| = {dt * np.max(np.abs(V)):.3g} > {MAX_STEP_POTENTIAL}; use more slices or a smaller grid"
        )
    dx = x[:, None] - x[None, :]
    expo = (m * dx * dx / (2 * dt) + dt * (V[:, None] + V[None, :]) / 2) / hbar
    kernel = math.sqrt(m / (2 * math.pi * hbar * dt)) * np.exp(-expo)
    if n_slices == 1:
        return kernel
    h = grid.spacing
    step = kernel * h
    return np.linalg.matrix_power(step, n_slices) / h


def transfer_grid_for(action: ActionParams, points, T: float, n_slices: int, margin: float = 1.5,
                      barrier: float = 40.0) -> SpatialGrid:
    """Grid for :func:`log_propagator_transfer`.

    The box extends ``margin`` beyond the outermost point and at least until
    V rises ``barrier`` (in hbar/T-independent energy units) above its
    minimum; the spacing resolves the short-time Gaussian width
    sqrt(hbar dt / m) by a factor of two and never exceeds 0.02.
    """
    pts = np.abs(np.asarray(points, dtype=float))
    half = float(np.max(pts)) + margin
    probe = np.linspace(-half, half, 2001)
    vmin = float(np.min(action.potential(probe)))
    while min(action.potential(half), action.potential(-half)) - vmin < barrier and half < 200:
        half += 0.5
    half = math.ceil(half)
    width = math.sqrt(action.hbar * T / (2 * n_slices) / action.mass)
    step = min(0.02, 0.5 * width)
    # a spacing dividing 0.01 keeps decimal boundary points on nodes
    step = 0.01 / math.ceil(0.01 / step) if step < 0.01 else 0.01 * math.floor(step / 0.01)
    n = int(round(2 * half / step)) + 1
    return SpatialGrid(-half, half, n)


def default_slices(T: float) -> int:
    """Power of two >= max(256, 128 T)."""
    need = max(256.0, 128.0 * T)
    return 1 << math.ceil(math.log2(need))


def log_propagator_transfer(action: ActionParams, points, T: float, n_slices: int | None = None,
                            grid: SpatialGrid | None = None, richardson: bool = True):
    """ln G among ``points`` (snapped to nodes) from the transfer matrix.

    With ``richardson`` the kernels at ``n_slices`` and ``2 n_slices`` are
    combined as (4 ln G_2n - ln G_n)/3, cancelling the O(dt^2) splitting
    error. Returns (snapped points, matrix of ln G).
    """
    n_slices = n_slices or default_slices(T)
    grid = grid or transfer_grid_for(action, points, T, n_slices)
    idx = grid.nearest_index(points)
    G = propagator_transfer(action, grid, T, n_slices)
    L1 = np.log(G[np.ix_(idx, idx)])
    if richardson:
        G2 = propagator_transfer(action, grid, T, 2 * n_slices)
        L2 = np.log(G2[np.ix_(idx, idx)])
        L = (4 * L2 - L1) / 3
    else:
        L = L1
    L = 0.5 * (L + L.T)
    return grid.points[idx], L


def harmonic_oracle(m: float, omega: float, x_i, x_f, T: float, hbar: float = 1.0):
    """Closed-form Euclidean harmonic-oscillator kernel (Mehler)."""
    if not (omega > 0 and T > 0):
        raise InputError("omega and T must be positive")
    s = math.sinh(omega * T)
    c = math.cosh(omega * T)
    x_i = np.asarray(x_i, dtype=float)
    x_f = np.asarray(x_f, dtype=float)
    pref = math.sqrt(m * omega / (2 * math.pi * hbar * s))
    out = pref * np.exp(-(m * omega / (2 * hbar * s)) * ((x_i**2 + x_f**2) * c - 2 * x_i * x_f))
    return out if out.ndim else float(out)


def write_spectrum_csv(spectrum: Spectrum, energy_path, wavefunction_path) -> None:
    with open(energy_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "energy"])
        for n, e in enumerate(spectrum.energies):
            w.writerow([n, f"{e:.17g}"])
    with open(wavefunction_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + [f"psi{n}" for n in range(spectrum.n_states)])
        for j, x in enumerate(spectrum.grid.points):
            w.writerow([f"{x:.17g}"] + [f"{v:.17g}" for v in spectrum.wavefunctions[:, j]])
