"""Euclidean classical mechanics of a polynomial action.

Boundary-value paths are found by minimizing the time-discretized action

    S_E = sum_j [ m/2 ((x_{j+1} - x_j)/dt)^2 + (V(x_j) + V(x_{j+1}))/2 ] dt

over the interior nodes with a damped Newton iteration on its tridiagonal
Hessian. Stationary points that are not minima (e.g. a path sitting on a
barrier top) are escaped along the lowest Hessian mode.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate, linalg, optimize

from .errors import InputError, NonConvergence
from .model import ActionParams, DoubleWellForm

N_T = 256
EOM_TOL = 1e-8
CROSS_TOL = 1e-6
MAX_ITER = 200

_OK, _SADDLE, _STALLED, _MAXITER = 0, 1, 2, 3
_EPS = np.finfo(float).eps


@njit(cache=True, nogil=True)
def _pot(c, x):
    return c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4])))


@njit(cache=True, nogil=True)
def _dpot(c, x):
    return c[1] + x * (2.0 * c[2] + x * (3.0 * c[3] + x * 4.0 * c[4]))


@njit(cache=True, nogil=True)
def _d2pot(c, x):
    return 2.0 * c[2] + x * (6.0 * c[3] + x * 12.0 * c[4])


@njit(cache=True, nogil=True)
def _action(x, m, c, dt):
    s = 0.0
    vl = _pot(c, x[0])
    for j in range(x.size - 1):
        vr = _pot(c, x[j + 1])
        d = x[j + 1] - x[j]
        s += 0.5 * m * d * d / dt + 0.5 * dt * (vl + vr)
        vl = vr
    return s


@njit(cache=True, nogil=True)
def _gradient(x, m, c, dt, g, diag):
    """Action gradient and Hessian diagonal over interior nodes; returns max |g|."""
    gmax = 0.0
    for j in range(1, x.size - 1):
        gj = m * (2.0 * x[j] - x[j - 1] - x[j + 1]) / dt + dt * _dpot(c, x[j])
        g[j - 1] = gj
        diag[j - 1] = 2.0 * m / dt + dt * _d2pot(c, x[j])
        if abs(gj) > gmax:
            gmax = abs(gj)
    return gmax


@njit(cache=True, nogil=True)
def _solve_tridiag(diag, off, mu, rhs, out, piv):
    """Solve (H + mu I) out = rhs by LDL^T; False if H + mu I is not positive definite."""
    n = diag.size
    piv[0] = diag[0] + mu
    if piv[0] <= 0.0:
        return False
    out[0] = rhs[0]
    for k in range(1, n):
        l = off / piv[k - 1]
        piv[k] = diag[k] + mu - l * off
        if piv[k] <= 0.0:
            return False
        out[k] = rhs[k] - l * out[k - 1]
    out[n - 1] = out[n - 1] / piv[n - 1]
    for k in range(n - 2, -1, -1):
        out[k] = (out[k] - off * out[k + 1]) / piv[k]
    return True


@njit(cache=True, nogil=True)
def _relax(x, m, c, dt, tol, max_iter):
    """Damped Newton minimization of the discrete action, in place.

    Returns (status, iterations, eom_residual).
    """
    n = x.size - 2
    g = np.empty(n)
    diag = np.empty(n)
    p = np.empty(n)
    piv = np.empty(n)
    rhs = np.empty(n)
    xt = x.copy()
    off = -m / dt
    mu = 0.0
    mu_floor = 1e-3 * dt
    stalls = 0
    s0 = _action(x, m, c, dt)
    for it in range(max_iter):
        gmax = _gradient(x, m, c, dt, g, diag)
        res = gmax / dt
        if not np.isfinite(res):
            return _STALLED, it, res
        if res < tol:
            if _solve_tridiag(diag, off, 0.0, g, p, piv):
                return _OK, it, res
            return _SADDLE, it, res
        for k in range(n):
            rhs[k] = -g[k]
        while not _solve_tridiag(diag, off, mu, rhs, p, piv):
            mu = max(4.0 * mu, mu_floor)
            if mu > 1e30:
                return _STALLED, it, res
        slope = 0.0
        for k in range(n):
            slope += g[k] * p[k]
        alpha = 1.0
        accepted = False
        while alpha > 1e-12:
            for k in range(n):
                xt[k + 1] = x[k + 1] + alpha * p[k]
            s1 = _action(xt, m, c, dt)
            if s1 <= s0 + 1e-4 * alpha * slope + 64.0 * 2.2e-16 * (abs(s0) + 1.0):
                accepted = True
                break
            alpha *= 0.5
        if accepted:
            for k in range(n):
                x[k + 1] = xt[k + 1]
            s0 = s1
            if alpha == 1.0:
                mu = 0.0 if mu < 1e-12 else 0.1 * mu
            else:
                mu = max(mu, mu_floor)
        else:
            # no decrease along a descent direction: lean towards gradient descent
            stalls += 1
            if stalls > 60:
                return _STALLED, it, res
            mu = max(10.0 * mu, dt)
    gmax = _gradient(x, m, c, dt, g, diag)
    return _MAXITER, max_iter, gmax / dt


@njit(cache=True, nogil=True)
def _shoot(x0, x1, m, c, dt, n, out):
    """Discrete Euler-Lagrange recursion from (x_0, x_1); returns x_n."""
    out[0] = x0
    out[1] = x1
    for j in range(1, n):
        out[j + 1] = 2.0 * out[j] - out[j - 1] + dt * dt * _dpot(c, out[j]) / m
        if not np.isfinite(out[j + 1]) or abs(out[j + 1]) > 1e8:
            return np.nan
    return out[n]


@dataclass(frozen=True, eq=False)
class TrajectoryE:
    """Discretized Euclidean path with its discrete action (units of hbar * [S])."""

    times: np.ndarray
    positions: np.ndarray
    action_value: float
    eom_residual: float = 0.0
    iterations: int = 0
    shooting_action: float | None = field(default=None)

    @property
    def n_t(self) -> int:
        return len(self.times) - 1


def _effective_tol(x, m, c, dt, tol):
    # the discrete residual cannot be resolved below rounding of the second difference
    scale = m * np.max(np.abs(x)) / dt**2 + np.max(np.abs(_dpot(c, x)))
    return max(tol, 16 * _EPS * scale)


def _lowest_mode(x, m, c, dt):
    diag = 2 * m / dt + dt * _d2pot(c, x[1:-1])
    off = np.full(diag.size - 1, -m / dt)
    w, v = linalg.eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    mode = v[:, 0]
    return w[0], mode / np.max(np.abs(mode))


def _minimize_path(x, m, c, dt, tol, max_iter, depth=0):
    """Relax ``x`` in place to a local minimum; returns (status, iterations, residual)."""
    status, it, res = _relax(x, m, c, dt, tol, max_iter)
    if status != _SADDLE:
        return status, it, res
    if depth >= 4:
        return _STALLED, it, res
    lam, mode = _lowest_mode(x, m, c, dt)
    delta = 0.05 * max(1.0, float(np.max(np.abs(x))))
    best = None
    for sign in (1.0, -1.0):
        trial = x.copy()
        trial[1:-1] += sign * delta * mode
        st, it2, r2 = _minimize_path(trial, m, c, dt, tol, max_iter, depth + 1)
        if st != _OK:
            continue
        s = _action(trial, m, c, dt)
        if best is None or s < best[0] - 1e-12 * (1 + abs(s)):
            best = (s, trial, it + it2, r2)
    if best is None:
        return _STALLED, it, res
    x[:] = best[1]
    return _OK, best[2], best[3]


def _check_time(T):
    if not (T > 0 and math.isfinite(T)):
        raise InputError(f"transition time must be positive, got {T}")


def relax_paths(
    action: ActionParams,
    x_i,
    x_f,
    T: float,
    n_t: int = N_T,
    eom_tol: float = EOM_TOL,
    max_iter: int = MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimal-action paths for many boundary pairs at once.

    Returns (positions of shape (B, n_t+1), discrete actions of shape (B,)).
    Raises NonConvergence naming the first failing pair.
    """
    _check_time(T)
    if n_t < 2:
        raise InputError("n_t must be >= 2")
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    x_f = np.atleast_1d(np.asarray(x_f, dtype=float))
    x_i, x_f = np.broadcast_arrays(x_i, x_f)
    m = float(action.mass)
    c = np.asarray(action.coeffs, dtype=float)
    dt = T / n_t
    s = np.linspace(0.0, 1.0, n_t + 1)
    paths = x_i[:, None] + (x_f - x_i)[:, None] * s[None, :]
    actions = np.empty(len(x_i))
    for b in range(len(x_i)):
        x = paths[b]
        x[0], x[-1] = x_i[b], x_f[b]
        tol = _effective_tol(x, m, c, dt, eom_tol)
        status, _, res = _minimize_path(x, m, c, dt, tol, max_iter)
        if status != _OK:
            raise NonConvergence(
                f"BVP ({x_i[b]:g} -> {x_f[b]:g}, T={T:g}) failed: status {status}, residual {res:.3g}"
            )
        actions[b] = _action(x, m, c, dt)
    return paths, actions


def shooting_action(action: ActionParams, x_i: float, x_f: float, T: float, n_t: int, v_guess: float):
    """Action of the discrete shooting solution bracketed around ``v_guess``.

    Returns None when the shot cannot be bracketed or blows up.
    """
    m = float(action.mass)
    c = np.asarray(action.coeffs, dtype=float)
    dt = T / n_t
    buf = np.empty(n_t + 1)

    def miss(v):
        end = _shoot(x_i, x_i + v * dt, m, c, dt, n_t, buf)
        return end - x_f

    width = 0.05 * max(1.0, abs(v_guess))
    for _ in range(6):
        lo, hi = v_guess - width, v_guess + width
        flo, fhi = miss(lo), miss(hi)
        if np.isfinite(flo) and np.isfinite(fhi) and flo * fhi < 0:
            break
        width *= 0.25
    else:
        return None
    try:
        v = optimize.brentq(miss, lo, hi, xtol=1e-15, rtol=4 * _EPS, maxiter=200)
    except (ValueError, RuntimeError):
        return None
    if not np.isfinite(miss(v)):
        return None
    buf[-1] = x_f
    return float(_action(buf, m, c, dt))


def solve_euclidean_bvp(
    action: ActionParams,
    x_i: float,
    x_f: float,
    T: float,
    n_t: int = N_T,
    eom_tol: float = EOM_TOL,
    max_iter: int = MAX_ITER,
    cross_check: bool = False,
    cross_tol: float = CROSS_TOL,
) -> TrajectoryE:
    """Minimal Euclidean action path from ``x_i`` at t=0 to ``x_f`` at t=T.

    Relaxation starts from the straight line. With ``cross_check`` the
    discrete shooting solution on the same branch is computed too; if it
    converges its action must agree within ``cross_tol``.
    """
    _check_time(T)
    if n_t < 16:
        raise InputError("n_t must be >= 16")
    paths, actions = relax_paths(action, x_i, x_f, T, n_t, eom_tol, max_iter)
    x = paths[0]
    times = np.linspace(0.0, T, n_t + 1)
    res, _ = verify_eom(action, TrajectoryE(times, x, actions[0]))
    shot = None
    if cross_check:
        v_guess = (x[1] - x[0]) / (T / n_t)
        shot = shooting_action(action, x_i, x_f, T, n_t, v_guess)
        if shot is not None and abs(shot - actions[0]) > cross_tol * max(1.0, abs(actions[0])):
            raise NonConvergence(f"shooting action {shot:.12g} disagrees with relaxation {actions[0]:.12g}")
    return TrajectoryE(times, x, float(actions[0]), float(res), 0, shot)


def euclidean_action(action: ActionParams, traj: TrajectoryE) -> float:
    """Trapezoid-in-time discrete Euclidean action, constant coefficient included."""
    x = np.asarray(traj.positions, dtype=float)
    dt = np.diff(np.asarray(traj.times, dtype=float))
    V = action.potential(x)
    kin = 0.5 * action.mass * np.diff(x) ** 2 / dt
    return float(np.sum(kin + 0.5 * dt * (V[:-1] + V[1:])))


def verify_eom(action: ActionParams, traj: TrajectoryE) -> tuple[float, float]:
    """(max discrete Euler-Lagrange residual, spread of the discrete Euclidean energy)."""
    x = np.asarray(traj.positions, dtype=float)
    t = np.asarray(traj.times, dtype=float)
    dt = t[1] - t[0]
    m = action.mass
    acc = m * (x[2:] - 2 * x[1:-1] + x[:-2]) / dt**2
    residual = float(np.max(np.abs(acc - action.potential.derivative(x[1:-1])))) if x.size > 2 else 0.0
    V = action.potential(x)
    energy = 0.5 * m * (np.diff(x) / dt) ** 2 - 0.5 * (V[:-1] + V[1:])
    return residual, float(np.max(energy) - np.min(energy))


def instanton_trajectory(dw: DoubleWellForm, mass: float, times) -> np.ndarray:
    """a tanh(sqrt(2/m) A a t), the kink between the two minima."""
    if not mass > 0:
        raise InputError("mass must be positive")
    rate = math.sqrt(2.0 / mass) * dw.amplitude * dw.half_separation
    return dw.half_separation * np.tanh(rate * np.asarray(times, dtype=float))


def instanton_rate(dw: DoubleWellForm, mass: float) -> float:
    return math.sqrt(2.0 / mass) * dw.amplitude * dw.half_separation


def instanton_action_closed_form(dw: DoubleWellForm, mass: float) -> float:
    return 4.0 / 3.0 * math.sqrt(2.0 * mass) * dw.amplitude * dw.half_separation**3


def instanton_action(dw: DoubleWellForm, mass: float, rtol: float = 1e-8) -> float:
    """Integral of sqrt(2 m V) between the minima of the zero-shifted double well.

    Checked against (4/3) sqrt(2m) A a^3.
    """
    if not mass > 0:
        raise InputError("mass must be positive")
    A, a = dw.amplitude, dw.half_separation
    val, _ = integrate.quad(
        lambda x: math.sqrt(2.0 * mass * A * A * (x * x - a * a) ** 2), -a, a, epsabs=0.0, epsrel=rtol
    )
    closed = instanton_action_closed_form(dw, mass)
    if abs(val - closed) > 10 * rtol * max(closed, 1e-300):
        raise NonConvergence(f"instanton quadrature {val} disagrees with closed form {closed}")
    return val


def write_trajectory_csv(path, times, positions, label: str = "x") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", label])
        for t, x in zip(times, positions):
            w.writerow([f"{t:.17g}", f"{x:.17g}"])
