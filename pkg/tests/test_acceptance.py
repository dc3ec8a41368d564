"""Acceptance suite: one test per criterion, each at its stated tolerance.

A summary line per criterion is printed at the end of the pytest run.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from quantum_action import analysis, classical, fit, model, propagator
from quantum_action.errors import QuantumActionError
from quantum_action.model import ActionParams, DoubleWellForm, PolynomialPotential

SWEEP_T = [0.5, 1, 1.5, 2, 3, 4, 5, 6, 7, 8, 9, 10]
SWEEP_INTERVAL = (-1.2, 1.2)


def record(n, checks):
    """checks: list of (label, ok) pairs; records and asserts the conjunction."""
    ok = all(c for _, c in checks)
    detail = "; ".join(f"{label} [{'ok' if c else 'FAIL'}]" for label, c in checks)
    ACCEPTANCE[n] = (ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def source(double_well):
    return fit.TransferSource(double_well)


@pytest.fixture(scope="module")
def table_scan(source, double_well):
    return fit.stability_scan(0.5, fit.STANDARD_INTERVALS, 6, source, double_well)


@pytest.fixture(scope="module")
def sweep(source, double_well):
    return fit.temperature_sweep(SWEEP_T, SWEEP_INTERVAL, 6, source, double_well)


def sweep_entry(sw, T):
    for r in sw.results:
        if r.T == T:
            return r
    return None


def test_criterion_1_ground_state(double_well):
    t0 = time.perf_counter()
    s = propagator.solve_spectrum(double_well, propagator.SpatialGrid(-10, 10, 2001))
    elapsed = time.perf_counter() - t0
    record(1, [
        (f"E_gr={s.ground_energy:.6f} vs 0.568893+-1e-4", abs(s.ground_energy - 0.568893) <= 1e-4),
        (f"T_sc={s.time_scale:.5f} vs 1.75779+-3e-4", abs(s.time_scale - 1.75779) <= 3e-4),
        (f"runtime {elapsed:.2f}s < 10s", elapsed < 10),
    ])


def test_criterion_2_table_reproduction(table_scan):
    mu, sd = table_scan.mean, table_scan.std
    record(2, [
        (f"{len(table_scan.results)}/10 intervals fitted", len(table_scan.results) == 10),
        (f"m={mu['m']:.4f} vs 0.9961+-0.005", abs(mu["m"] - 0.9961) <= 0.005),
        (f"v0={mu['v0']:.4f} vs 1.5710+-0.01", abs(mu["v0"] - 1.5710) <= 0.01),
        (f"v2={mu['v2']:.4f} vs -0.745+-0.02", abs(mu["v2"] + 0.745) <= 0.02),
        (f"v4={mu['v4']:.4f} vs 0.493+-0.01", abs(mu["v4"] - 0.493) <= 0.01),
        (f"|v1|={abs(mu['v1']):.1e},|v3|={abs(mu['v3']):.1e} <= 0.01", abs(mu["v1"]) <= 0.01 and abs(mu["v3"]) <= 0.01),
        (f"std(v0)={sd['v0']:.4f} <= 0.005", sd["v0"] <= 0.005),
    ])


def test_criterion_3_instanton_parameters(table_scan):
    mu = table_scan.mean
    p = PolynomialPotential(tuple(mu[k] for k in ("v0", "v1", "v2", "v3", "v4")))
    d = model.to_double_well(p)
    t = np.linspace(-5, 5, 101)
    x = classical.instanton_trajectory(d, mu["m"], t)
    dev = float(np.max(np.abs(x - 0.869 * np.tanh(0.865 * t))))
    record(3, [
        (f"A={d.amplitude:.4f} vs 0.702+-0.01", abs(d.amplitude - 0.702) <= 0.01),
        (f"a={d.half_separation:.4f} vs 0.869+-0.01", abs(d.half_separation - 0.869) <= 0.01),
        (f"max|x(t)-0.869 tanh(0.865t)|={dev:.4f} <= 0.01", dev <= 0.01),
    ])


def test_criterion_4_zero_temperature_limit(sweep, dw_spectrum):
    e0 = dw_spectrum.ground_energy
    checks = []
    for T in (9, 10):
        r = sweep_entry(sweep, T)
        if r is None:
            checks.append((f"T={T} fit failed", False))
            continue
        v0 = r.values["v0"]
        checks.append((f"v0(T={T})={v0:.4f} vs 0.5677+-0.02", abs(v0 - 0.5677) <= 0.02))
        checks.append((f"|v0(T={T})-E_gr|={abs(v0 - e0):.4f} <= 0.02", abs(v0 - e0) <= 0.02))
    r8, r10 = sweep_entry(sweep, 8), sweep_entry(sweep, 10)
    if r8 is None or r10 is None:
        checks.append(("m plateau: fit missing", False))
    else:
        m8, m10 = r8.values["m"], r10.values["m"]
        rel = abs(m10 - m8) / m8
        checks.append((f"m(8)={m8:.4f} m(10)={m10:.4f} change {rel:.1%} < 2%", rel < 0.02))
    record(4, checks)


def test_criterion_5_instanton_action_hierarchy(sweep):
    s_cl = classical.instanton_action(DoubleWellForm(1 / math.sqrt(2), 1.0), 1.0)
    checks = [(f"S_cl={s_cl:.5f} vs 1.3333+-1e-4", abs(s_cl - 1.3333) <= 1e-4)]
    r = sweep_entry(sweep, 10)
    if r is None:
        checks.append(("T=10 fit failed", False))
    else:
        try:
            d = model.to_double_well(r.params.potential)
            s_q = classical.instanton_action(d, r.params.mass)
            ratio = s_q / s_cl
            checks.append((f"S_q(T=10)={s_q:.4f}, ratio {ratio:.4f} <= 0.3", ratio <= 0.3))
        except QuantumActionError as exc:
            checks.append((f"T=10 action not a double well: {exc}", False))
            # informational only: the even part read as a double well
            d = model.to_double_well(r.params.potential, parity_tol=math.inf)
            ratio = classical.instanton_action(d, r.params.mass) / s_cl
            checks.append((f"(even part alone would give ratio {ratio:.4f}; not counted)", True))
    record(5, checks)


def test_criterion_6_quadratic_exactness():
    rng = np.random.default_rng(20240607)
    boundary = fit.boundary_pairs((-1.2, 1.2), 6)
    worst = {"rms": 0.0, "m": 0.0, "v2": 0.0, "v0": 0.0}
    for _ in range(20):
        m, w, T = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.25, 4.0)
        bare = ActionParams(m, model.harmonic_potential(m, w))
        # start away from the answer so the optimizer has work to do
        guess = ActionParams(1.1 * m, PolynomialPotential((0.0, 0.02, 0.45 * m * w * w, 0.01, 0.05)))
        r = fit.fit_quantum_action(fit.FitConfig(T, boundary, initial_guess=guess), bare)
        v0 = math.log(2 * math.pi * math.sinh(w * T) / (m * w)) / (2 * T)
        worst["rms"] = max(worst["rms"], r.residual_rms)
        worst["m"] = max(worst["m"], abs(r.values["m"] - m))
        worst["v2"] = max(worst["v2"], abs(r.values["v2"] - 0.5 * m * w * w))
        worst["v0"] = max(worst["v0"], abs(r.values["v0"] - v0))
    record(6, [
        (f"max rms={worst['rms']:.1e} < 1e-6", worst["rms"] < 1e-6),
        (f"max|dm|={worst['m']:.1e} <= 1e-3", worst["m"] <= 1e-3),
        (f"max|dv2|={worst['v2']:.1e} <= 1e-3", worst["v2"] <= 1e-3),
        (f"max|dv0|={worst['v0']:.1e} <= 1e-3", worst["v0"] <= 1e-3),
    ])


def test_criterion_7_cross_method(double_well, dw_spectrum):
    pts = np.array(fit.boundary_pairs((-1.2, 1.2), 6).points)
    worst_st = 0.0
    for T in (0.5, 1.0, 2.0, 4.0):
        snapped, L = propagator.log_propagator_transfer(double_well, pts, T)
        gs = propagator.propagator_spectral(dw_spectrum, snapped[:, None], snapped[None, :], T)
        gt = np.exp(L)
        worst_st = max(worst_st, float(np.max(np.abs(gs - gt) / gt)))

    grid = dw_spectrum.grid
    dense = propagator.propagator_dense(double_well, grid, 2.0)
    idx = grid.nearest_index(pts)
    gs = propagator.propagator_spectral(dw_spectrum, grid.points[idx][:, None], grid.points[idx][None, :], 2.0)
    worst_dense = float(np.max(np.abs(gs - dense[np.ix_(idx - 1, idx - 1)]) / gs))

    s80 = propagator.solve_spectrum(double_well, k=80)
    y = grid.points[np.abs(grid.points) <= 6]
    rng = np.random.default_rng(7)
    worst_sg = 0.0
    for _ in range(10):
        xi, xf = rng.uniform(-2, 2, 2)
        t1, t2 = rng.uniform(0.25, 2, 2)
        # far quadrature nodes carry negligible weight; their sums are cancellation-limited
        a = propagator.propagator_spectral(s80, np.full_like(y, xi), y, t1, tol=np.inf)
        b = propagator.propagator_spectral(s80, y, np.full_like(y, xf), t2, tol=np.inf)
        rhs = propagator.propagator_spectral(s80, xi, xf, t1 + t2)
        worst_sg = max(worst_sg, abs(np.trapezoid(a * b, y) - rhs) / rhs)
    record(7, [
        (f"spectral vs transfer max rel {worst_st:.1e} < 1e-3", worst_st < 1e-3),
        (f"spectral vs dense expm max rel {worst_dense:.1e} < 1e-6", worst_dense < 1e-6),
        (f"semigroup max rel {worst_sg:.1e} < 1e-4", worst_sg < 1e-4),
    ])


def test_criterion_8_effective_action():
    lambdas = [0.0, 0.01, 0.02, 0.03, 0.04, 0.1]
    rows = {r.lam: r for r in analysis.effective_vs_quantum_sweep(lambdas, T=4.0)}
    small = max(rows[l].v2_gap for l in lambdas if l <= 0.03)
    table = ", ".join(f"{l:g}:{rows[l].v2_gap:.4f}" for l in lambdas)
    record(8, [
        (f"max |v2_qa-v2_eff| for lambda<=0.03 = {small:.4f} <= 0.01", small <= 0.01),
        (f"gap(0.1)={rows[0.1].v2_gap:.4f} > gap(0.04)={rows[0.04].v2_gap:.4f}", rows[0.1].v2_gap > rows[0.04].v2_gap),
        (f"gaps {table}", True),
    ])


def test_criterion_9_thermal(double_well, dw_spectrum, harmonic, harmonic_spectrum, source):
    cfg4 = analysis.ThermalConfig(4.0)
    exact = analysis.thermal_expectation_exact(dw_spectrum, cfg4)
    r = fit.fit_quantum_action(fit.FitConfig(4.0, fit.boundary_pairs(SWEEP_INTERVAL, 6)), source, double_well)
    qa = analysis.thermal_expectation_quantum_action(r, cfg4)
    rel = abs(qa - exact) / exact

    cfg1 = analysis.ThermalConfig(1.0)
    h_exact = analysis.thermal_expectation_exact(harmonic_spectrum, cfg1)
    h_fit = fit.fit_quantum_action(fit.FitConfig(1.0, fit.boundary_pairs(SWEEP_INTERVAL, 6)), harmonic)
    h_qa = analysis.thermal_expectation_quantum_action(h_fit, cfg1)
    target = 0.5 / math.tanh(0.5)
    record(9, [
        (f"double well <x^2> qa={qa:.4f} exact={exact:.4f} rel {rel:.1%} <= 10%", rel <= 0.10),
        (f"harmonic <x^2> exact={h_exact:.5f} vs 1.08198+-2e-2", abs(h_exact - 1.08198) <= 2e-2),
        (f"harmonic <x^2> qa={h_qa:.5f} vs 1.08198+-2e-2", abs(h_qa - 1.08198) <= 2e-2),
        (f"closed form {target:.5f}", abs(target - 1.08198) < 1e-5),
    ])


def test_criterion_10_inverse_time_fit(sweep):
    rs = [r for r in sweep.results if 0.5 <= r.T <= 8]
    T = [r.T for r in rs]
    A, B, rel = fit.fit_inverse_time(T, [r.values["v0"] for r in rs])
    record(10, [
        (f"{len(rs)} points T in [0.5, 8]", len(rs) == sum(1 for t in SWEEP_T if t <= 8)),
        (f"A={A:.4f} B={B:.4f} relative residual {rel:.2%} < 2%", rel < 0.02),
    ])
