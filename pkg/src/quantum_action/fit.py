"""Quantum-action fits: match -hbar ln G against the classical action of a trial action.

For a transition time T and a set of boundary pairs the fit minimizes

    sum_pairs [ ln G(x_i, x_f; T) + S_E(x_i, x_f; T; trial) / hbar ]^2

over (m, v0, ..., v4), where S_E is the discrete action of the trial
action's minimal path. The constant v0 contributes v0 * T to every S_E and
so plays the role of the normalization of G.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .classical import relax_paths
from .errors import InputError, NonConvergence, OptimizerFailure, QuantumActionError
from .model import ActionParams, PolynomialPotential
from .propagator import Spectrum, log_propagator_spectral, log_propagator_transfer

logger = logging.getLogger(__name__)

FAIL_THRESHOLD = 0.05
PARAM_NAMES = ("m", "v0", "v1", "v2", "v3", "v4")
# Table-1 intervals [-L, L]
STANDARD_INTERVALS = tuple((-h, h) for h in (1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0))
CSV_HEADER = ["T", "interval_lo", "interval_hi", "m", "v0", "v1", "v2", "v3", "v4", "residual_rms"]


@dataclass(frozen=True)
class BoundarySet:
    interval: tuple[float, float]
    j_points: int
    points: tuple[float, ...]
    pairs: tuple[tuple[float, float], ...]


def boundary_pairs(interval, j_points: int = 6) -> BoundarySet:
    """Evenly spaced points over ``interval`` and all unordered pairs, diagonal included."""
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise InputError(f"degenerate interval [{lo}, {hi}]")
    if j_points < 2:
        raise InputError("j_points must be >= 2")
    pts = tuple(float(v) for v in np.round(np.linspace(lo, hi, j_points), 12))
    pairs = tuple(itertools.combinations_with_replacement(pts, 2))
    return BoundarySet((lo, hi), j_points, pts, pairs)


@dataclass(frozen=True, eq=False)
class AmplitudeData:
    """Boundary pairs with their ln G at one transition time."""

    T: float
    x_i: np.ndarray
    x_f: np.ndarray
    log_g: np.ndarray
    hbar: float = 1.0

    def __len__(self):
        return len(self.log_g)


def spectral_data(spectrum: Spectrum, boundary: BoundarySet, T: float) -> AmplitudeData:
    """ln G at grid-snapped boundary pairs from a spectral decomposition."""
    pts = spectrum.grid.snap(np.asarray(boundary.points))
    lookup = dict(zip(boundary.points, pts))
    xi = np.array([lookup[a] for a, _ in boundary.pairs])
    xf = np.array([lookup[b] for _, b in boundary.pairs])
    return AmplitudeData(T, xi, xf, np.atleast_1d(log_propagator_spectral(spectrum, xi, xf, T)), spectrum.hbar)


def transfer_data(action: ActionParams, boundary: BoundarySet, T: float, **kwargs) -> AmplitudeData:
    """ln G at grid-snapped boundary pairs from the Richardson-corrected transfer matrix."""
    snapped, L = log_propagator_transfer(action, np.asarray(boundary.points), T, **kwargs)
    pos = {p: k for k, p in enumerate(boundary.points)}
    ii = np.array([pos[a] for a, _ in boundary.pairs])
    jj = np.array([pos[b] for _, b in boundary.pairs])
    return AmplitudeData(T, snapped[ii], snapped[jj], L[ii, jj], action.hbar)


class TransferSource:
    """Amplitude source backed by the transfer matrix of a bare action.

    Kernels are computed once per (T, point set) and reused.
    """

    def __init__(self, action: ActionParams, **kwargs):
        self.action = action
        self.kwargs = kwargs
        self._cache: dict = {}

    def __call__(self, boundary: BoundarySet, T: float) -> AmplitudeData:
        key = (float(T), boundary.points)
        if key not in self._cache:
            self._cache[key] = transfer_data(self.action, boundary, T, **self.kwargs)
        return self._cache[key]


class SpectralSource:
    def __init__(self, spectrum: Spectrum):
        self.spectrum = spectrum

    def __call__(self, boundary: BoundarySet, T: float) -> AmplitudeData:
        return spectral_data(self.spectrum, boundary, T)


def _as_source(source):
    if isinstance(source, Spectrum):
        return SpectralSource(source)
    if isinstance(source, ActionParams):
        return TransferSource(source)
    return source


def default_time_steps(T: float) -> int:
    return 2 * math.ceil(max(256.0, 64.0 * T) / 2)


def classical_actions(trial: ActionParams, x_i, x_f, T: float, n_t: int | None = None,
                      richardson: bool = True) -> np.ndarray:
    """Minimal discrete actions for all pairs; Richardson-extrapolated over (n_t, 2 n_t)."""
    n_t = n_t or default_time_steps(T)
    _, s1 = relax_paths(trial, x_i, x_f, T, n_t)
    if not richardson:
        return s1
    _, s2 = relax_paths(trial, x_i, x_f, T, 2 * n_t)
    return (4 * s2 - s1) / 3


def pair_residuals(trial: ActionParams, data: AmplitudeData, n_t: int | None = None,
                   richardson: bool = True) -> np.ndarray:
    """ln G + S_E / hbar for every pair."""
    if len(data) == 0:
        return np.zeros(0)
    s = classical_actions(trial, data.x_i, data.x_f, data.T, n_t, richardson)
    return data.log_g + s / trial.hbar


def fit_objective(trial: ActionParams, data: AmplitudeData, n_t: int | None = None,
                  richardson: bool = True) -> float:
    """Sum of squared log-amplitude residuals with equal weights.

    Raises NonConvergence when a boundary-value problem fails for the trial
    action; callers must treat that trial as invalid.
    """
    r = pair_residuals(trial, data, n_t, richardson)
    return float(np.dot(r, r))


@dataclass(frozen=True)
class FitConfig:
    T: float
    boundary: BoundarySet
    initial_guess: ActionParams | None = None
    enforce_parity: bool = False
    optimizer_tol: float = 1e-10
    max_evals: int = 20000
    n_t: int | None = None
    richardson: bool = True
    fail_threshold: float = FAIL_THRESHOLD

    def __post_init__(self):
        if not self.T > 0:
            raise InputError(f"T must be positive, got {self.T}")
        if not self.optimizer_tol > 0:
            raise InputError("optimizer_tol must be positive")


@dataclass(frozen=True, eq=False)
class FitResult:
    params: ActionParams
    residual_rms: float
    per_pair_residuals: np.ndarray
    interval: tuple[float, float]
    T: float = float("nan")
    n_evals: int = 0
    pairs: tuple = field(default=())

    @property
    def values(self) -> dict:
        return {"m": self.params.mass, **{f"v{k}": c for k, c in enumerate(self.params.coeffs)}}

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "interval": list(self.interval),
            "params": self.params.to_dict(),
            "residual_rms": self.residual_rms,
            "per_pair_residuals": [float(r) for r in self.per_pair_residuals],
            "pairs": [list(p) for p in self.pairs],
            "n_evals": self.n_evals,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            ActionParams.from_dict(d["params"]),
            float(d["residual_rms"]),
            np.asarray(d["per_pair_residuals"], dtype=float),
            tuple(d["interval"]),
            float(d.get("T", float("nan"))),
            int(d.get("n_evals", 0)),
            tuple(tuple(p) for p in d.get("pairs", ())),
        )

    def csv_row(self) -> list:
        v = self.values
        return [self.T, *self.interval, *(v[k] for k in PARAM_NAMES), self.residual_rms]


def _pack(p: ActionParams, parity: bool) -> np.ndarray:
    c = p.coeffs
    if parity:
        return np.array([math.log(p.mass), c[0], c[2], c[4]])
    return np.array([math.log(p.mass), *c])


def _unpack(z: np.ndarray, parity: bool, hbar: float) -> ActionParams:
    if parity:
        coeffs = (z[1], 0.0, z[2], 0.0, z[3])
    else:
        coeffs = tuple(z[1:])
    return ActionParams(math.exp(z[0]), PolynomialPotential(coeffs), hbar)


def _simplex(z0: np.ndarray, parity: bool, scale: float) -> np.ndarray:
    steps = np.array([0.02, 0.05, 0.05, 0.05] if parity else [0.02, 0.05, 0.01, 0.05, 0.01, 0.05]) * scale
    sim = np.tile(z0, (len(z0) + 1, 1))
    for k in range(len(z0)):
        sim[k + 1, k] += steps[k]
    return sim


def _recentre_v0(trial: ActionParams, data: AmplitudeData, n_t, richardson) -> ActionParams:
    # v0 enters every action as v0*T: its least-squares value is closed form
    try:
        r = pair_residuals(trial, data, n_t, richardson)
    except NonConvergence:
        return trial
    shift = -float(np.mean(r)) * trial.hbar / data.T
    return ActionParams(trial.mass, trial.potential.shifted(trial.coeffs[0] + shift), trial.hbar)


def fit_to_data(config: FitConfig, data: AmplitudeData, initial_guess: ActionParams) -> FitResult:
    """Nelder-Mead fit of the quantum action to precomputed ln G data."""
    parity = config.enforce_parity
    hbar = initial_guess.hbar
    n_evals = 0
    failures = 0

    def objective(z):
        nonlocal n_evals, failures
        n_evals += 1
        try:
            return fit_objective(_unpack(z, parity, hbar), data, config.n_t, config.richardson)
        except (NonConvergence, QuantumActionError, FloatingPointError, ValueError):
            failures += 1
            return np.inf

    start = _recentre_v0(initial_guess, data, config.n_t, config.richardson)
    z = _pack(start, parity)
    best_f = np.inf
    for scale in (1.0, 0.1):
        budget = config.max_evals - n_evals
        if budget <= 0:
            break
        res = optimize.minimize(
            objective,
            z,
            method="Nelder-Mead",
            options={
                "initial_simplex": _simplex(z, parity, scale),
                "xatol": 1e-9,
                "fatol": config.optimizer_tol,
                "maxfev": budget,
                "adaptive": True,
            },
        )
        if res.fun <= best_f:
            z, best_f = res.x, res.fun
    if not np.isfinite(best_f):
        raise OptimizerFailure(f"no valid trial action found at T={config.T:g}")
    params = _unpack(z, parity, hbar)
    r = pair_residuals(params, data, config.n_t, config.richardson)
    rms = float(np.sqrt(np.mean(r * r))) if len(r) else 0.0
    logger.debug("fit T=%g interval=%s evals=%d invalid=%d rms=%.3g", config.T, config.boundary.interval,
                 n_evals, failures, rms)
    result = FitResult(params, rms, r, config.boundary.interval, config.T, n_evals,
                       tuple(zip(data.x_i.tolist(), data.x_f.tolist())))
    if rms > config.fail_threshold:
        raise OptimizerFailure(f"residual_rms {rms:.3g} exceeds {config.fail_threshold:g} at T={config.T:g}")
    return result


def fit_quantum_action(config: FitConfig, source, bare: ActionParams | None = None) -> FitResult:
    """Fit the quantum action at ``config.T``.

    ``source`` supplies ln G: a :class:`Spectrum` (spectral decomposition),
    an :class:`ActionParams` (transfer matrix of that bare action) or any
    callable ``(boundary, T) -> AmplitudeData``. Without an initial guess the
    bare action is used, which must then be given (or be the source itself).
    """
    src = _as_source(source)
    data = src(config.boundary, config.T)
    guess = config.initial_guess
    if guess is None:
        bare = bare or getattr(src, "action", None)
        if bare is None:
            raise InputError("initial_guess or the bare action is required")
        e0 = getattr(getattr(src, "spectrum", None), "ground_energy", None)
        guess = bare if e0 is None else ActionParams(bare.mass, bare.potential.shifted(e0), bare.hbar)
    return fit_to_data(config, data, guess)


def summarize(results: list[FitResult]) -> tuple[dict, dict]:
    """Per-parameter mean and sample standard deviation."""
    table = {k: np.array([r.values[k] for r in results]) for k in PARAM_NAMES}
    table["residual_rms"] = np.array([r.residual_rms for r in results])
    mean = {k: float(np.mean(v)) for k, v in table.items()}
    std = {k: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0 for k, v in table.items()}
    return mean, std


@dataclass
class ScanResult:
    T: float
    results: list
    mean: dict
    std: dict
    failures: list = field(default_factory=list)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def stability_scan(T: float, intervals, j_points: int, source, bare: ActionParams | None = None,
                   workers: int = 1, **config_kwargs) -> ScanResult:
    """One fit per boundary interval plus the mean/stddev summary row.

    Failed intervals are recorded in ``failures`` and excluded from the summary.
    """
    src = _as_source(source)

    def one(interval):
        try:
            cfg = FitConfig(T, boundary_pairs(interval, j_points), **config_kwargs)
            return fit_quantum_action(cfg, src, bare)
        except QuantumActionError as exc:
            return (tuple(interval), str(exc))

    out = _map(one, list(intervals), workers)
    results = [r for r in out if isinstance(r, FitResult)]
    failures = [r for r in out if not isinstance(r, FitResult)]
    if not results:
        raise OptimizerFailure(f"all intervals failed at T={T:g}: {failures}")
    mean, std = summarize(results)
    return ScanResult(T, results, mean, std, failures)


@dataclass
class SweepResult:
    results: list
    failures: list
    v0_fit: tuple[float, float]
    v0_relative_residual: float


def fit_inverse_time(T_values, v0_values) -> tuple[float, float, float]:
    """Least-squares v0(T) ~ A + B/T; returns (A, B, relative residual ||fit - v0|| / ||v0||)."""
    T = np.asarray(T_values, dtype=float)
    y = np.asarray(v0_values, dtype=float)
    X = np.column_stack([np.ones_like(T), 1.0 / T])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    rel = float(np.linalg.norm(X @ coef - y) / np.linalg.norm(y))
    return float(coef[0]), float(coef[1]), rel


def temperature_sweep(T_values, interval, j_points: int, source, bare: ActionParams | None = None,
                      **config_kwargs) -> SweepResult:
    """Fits at ascending T, each warm-started from the previous result."""
    T_values = [float(t) for t in T_values]
    if any(t <= 0 for t in T_values) or any(b <= a for a, b in zip(T_values, T_values[1:])):
        raise InputError("T_values must be positive and strictly ascending")
    src = _as_source(source)
    boundary = boundary_pairs(interval, j_points)
    guess = config_kwargs.pop("initial_guess", None)
    results, failures = [], []
    for T in T_values:
        cfg = FitConfig(T, boundary, initial_guess=guess, **config_kwargs)
        try:
            r = fit_quantum_action(cfg, src, bare)
        except QuantumActionError as exc:
            failures.append((T, str(exc)))
            continue
        results.append(r)
        guess = r.params
    if len(results) >= 2:
        A, B, rel = fit_inverse_time([r.T for r in results], [r.params.coeffs[0] for r in results])
    else:
        A, B, rel = float("nan"), float("nan"), float("nan")
    return SweepResult(results, failures, (A, B), rel)


def write_fits_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in results:
            w.writerow([f"{v:.17g}" for v in r.csv_row()])
