"""Command-line front end: ``quantum-action <subcommand> --config run.json --out DIR``.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import analysis, classical, fit, model, propagator
from .errors import QuantumActionError

log = logging.getLogger("quantum_action")

MODELS = ("double_well", "harmonic", "anharmonic", "custom")


class ConfigError(ValueError):
    pass


# oscillator states up to K=30 reach |x| ~ 8 and need a wider box than the double well
DEFAULT_BOX = {"double_well": (-10.0, 10.0, 2001), "harmonic": (-12.0, 12.0, 2401),
               "anharmonic": (-12.0, 12.0, 2401), "custom": (-10.0, 10.0, 2001)}


@dataclass
class GridConfig:
    x_min: float | None = None
    x_max: float | None = None
    n_points: int | None = None
    states: int = 30


@dataclass
class FitSettings:
    j_points: int = 6
    intervals: list = field(default_factory=lambda: [list(iv) for iv in fit.STANDARD_INTERVALS])
    interval: list = field(default_factory=lambda: [-1.2, 1.2])
    enforce_parity: bool = False
    max_evals: int = 20000
    optimizer_tol: float = 1e-10
    propagator: str = "transfer"


@dataclass
class RunConfig:
    model: str = "double_well"
    mass: float = 1.0
    hbar: float = 1.0
    omega: float = 1.0
    anharmonic_lambda: float = 0.0
    coeffs: list | None = None
    grid: GridConfig = field(default_factory=GridConfig)
    fit: FitSettings = field(default_factory=FitSettings)
    thermal_range: list = field(default_factory=lambda: [-3.0, 3.0])
    output_dir: str = "out"

    def spatial_grid(self) -> propagator.SpatialGrid:
        lo, hi, n = DEFAULT_BOX[self.model]
        g = self.grid
        return propagator.SpatialGrid(
            lo if g.x_min is None else g.x_min,
            hi if g.x_max is None else g.x_max,
            n if g.n_points is None else g.n_points,
        )

    def action(self) -> model.ActionParams:
        if self.model == "double_well":
            pot = model.double_well_potential()
        elif self.model == "harmonic":
            pot = model.harmonic_potential(self.mass, self.omega)
        elif self.model == "anharmonic":
            return analysis.AnharmonicModel(self.mass, 1.0, 1.0, self.anharmonic_lambda).action(self.hbar)
        else:
            pot = model.PolynomialPotential(tuple(self.coeffs))
        return model.ActionParams(self.mass, pot, self.hbar)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for k, v in data.items():
        if k == "grid":
            v = _build(GridConfig, v, "grid")
        elif k == "fit":
            v = _build(FitSettings, v, "fit")
        kwargs[k] = v
    return cls(**kwargs)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = _build(RunConfig, data, "config")
    if cfg.model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {cfg.model!r}")
    if cfg.model == "custom" and (cfg.coeffs is None or len(cfg.coeffs) != 5):
        raise ConfigError("custom model needs 5 coeffs")
    if cfg.fit.propagator not in ("transfer", "spectral"):
        raise ConfigError("fit.propagator must be 'transfer' or 'spectral'")
    try:
        cfg.action()
        cfg.spatial_grid()
    except (QuantumActionError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_list(text: str) -> list[float]:
    vals = _float_list(text)
    if not vals or any(not (v > 0) for v in vals):
        raise argparse.ArgumentTypeError(f"values must be positive: {text!r}")
    return vals


class Runner:
    def __init__(self, cfg: RunConfig, out: Path, threads: int):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.failures: list = []
        self.action = cfg.action()
        out.mkdir(parents=True, exist_ok=True)

    @property
    def grid(self):
        return self.cfg.spatial_grid()

    def spectrum(self, k=None):
        return propagator.solve_spectrum(self.action, self.grid, k or self.cfg.grid.states)

    def source(self):
        if self.cfg.fit.propagator == "spectral":
            return fit.SpectralSource(self.spectrum())
        return fit.TransferSource(self.action)

    def fit_kwargs(self) -> dict:
        f = self.cfg.fit
        return {"enforce_parity": f.enforce_parity, "max_evals": f.max_evals, "optimizer_tol": f.optimizer_tol}

    def write_json(self, name: str, payload) -> None:
        with open(self.out / name, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)

    def finish(self) -> int:
        if self.failures:
            self.write_json("failures.json", [{"item": str(k), "error": e} for k, e in self.failures])
            for k, e in self.failures:
                print(f"FAILED {k}: {e}", file=sys.stderr)
            return 1
        return 0


def cmd_spectrum(run: Runner, args) -> int:
    s = run.spectrum()
    propagator.write_spectrum_csv(s, run.out / "spectrum_energies.csv", run.out / "spectrum_wavefunctions.csv")
    print(f"E_gr={s.ground_energy:.6f} T_sc={s.time_scale:.5f}")
    return 0


def _table_rows(scan: fit.ScanResult):
    rows = [[f"{v:.17g}" for v in r.csv_row()] for r in scan.results]
    avg = [f"{scan.T:.17g}", "", ""] + [f"{scan.mean[k]:.17g}" for k in fit.PARAM_NAMES]
    avg.append(f"{scan.mean['residual_rms']:.17g}")
    return rows + [avg]


def cmd_fit(run: Runner, args) -> int:
    T = args.T
    intervals = [tuple(iv) for iv in run.cfg.fit.intervals]
    scan = fit.stability_scan(T, intervals, run.cfg.fit.j_points, run.source(), run.action,
                              workers=run.threads, **run.fit_kwargs())
    run.failures.extend(scan.failures)
    import csv

    with open(run.out / f"table_T{T:g}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fit.CSV_HEADER)
        w.writerows(_table_rows(scan))
    run.write_json(f"fit_T{T:g}.json", {
        "T": T,
        "fits": [r.to_dict() for r in scan.results],
        "average": scan.mean,
        "stddev": scan.std,
    })
    for r in scan.results:
        v = r.values
        print(f"[{r.interval[0]:+.1f},{r.interval[1]:+.1f}] "
              + " ".join(f"{k}={v[k]:.5f}" for k in fit.PARAM_NAMES) + f" residual_rms={r.residual_rms:.3e}")
    print("average " + " ".join(f"{k}={scan.mean[k]:.5f}" for k in fit.PARAM_NAMES)
          + f" residual_rms={scan.mean['residual_rms']:.3e}")
    return run.finish()


def cmd_sweep(run: Runner, args) -> int:
    sw = fit.temperature_sweep(sorted(args.T_list), tuple(run.cfg.fit.interval), run.cfg.fit.j_points,
                               run.source(), run.action, **run.fit_kwargs())
    run.failures.extend(sw.failures)
    fit.write_fits_csv(run.out / "sweep.csv", sw.results)
    A, B = sw.v0_fit
    run.write_json("sweep_v0_fit.json", {"A": A, "B": B, "relative_residual": sw.v0_relative_residual})
    for r in sw.results:
        print(f"T={r.T:g} " + " ".join(f"{k}={v:.5f}" for k, v in r.values.items()))
    print(f"v0 ~ A + B/T: A={A:.5f} B={B:.5f} relative_residual={sw.v0_relative_residual:.3e}")
    return run.finish()


def cmd_instanton(run: Runner, args) -> int:
    times = np.linspace(-args.t_max, args.t_max, args.n_times)
    rows = []
    bare = run.action
    try:
        dw = model.to_double_well(bare.potential)
        x = classical.instanton_trajectory(dw, bare.mass, times)
        classical.write_trajectory_csv(run.out / "instanton_T0.csv", times, x)
        rows.append((0.0, bare.mass, dw.amplitude, dw.half_separation,
                     classical.instanton_rate(dw, bare.mass), classical.instanton_action(dw, bare.mass)))
    except QuantumActionError as exc:
        run.failures.append(("T=0", str(exc)))
    T_list = sorted(t for t in args.T_list if t > 0)
    if T_list:
        sw = fit.temperature_sweep(T_list, tuple(run.cfg.fit.interval), run.cfg.fit.j_points,
                                   run.source(), run.action, **run.fit_kwargs())
        run.failures.extend((f"T={T:g}", e) for T, e in sw.failures)
        for r in sw.results:
            try:
                dw = model.to_double_well(r.params.potential)
            except QuantumActionError as exc:
                run.failures.append((f"T={r.T:g}", str(exc)))
                continue
            m = r.params.mass
            x = classical.instanton_trajectory(dw, m, times)
            classical.write_trajectory_csv(run.out / f"instanton_T{r.T:g}.csv", times, x)
            rows.append((r.T, m, dw.amplitude, dw.half_separation, classical.instanton_rate(dw, m),
                         classical.instanton_action(dw, m)))
    import csv

    with open(run.out / "instanton_actions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "m", "A", "a", "rate", "action"])
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])
    for T, m, A, a, rate, S in rows:
        print(f"T={T:g} A={A:.4f} a={a:.4f} x(t)={a:.3f}*tanh({rate:.3f} t) action={S:.5f}")
    return run.finish()


def cmd_effective(run: Runner, args) -> int:
    rows = analysis.effective_vs_quantum_sweep(
        args.lambda_list, T=args.T, interval=tuple(run.cfg.fit.interval), j_points=run.cfg.fit.j_points,
        base=analysis.AnharmonicModel(run.cfg.mass), workers=run.threads,
        max_evals=run.cfg.fit.max_evals, optimizer_tol=run.cfg.fit.optimizer_tol,
    )
    analysis.write_effective_csv(run.out / "effective.csv", rows)
    for r in rows:
        print(f"lambda={r.lam:g} v2_eff={r.v2_eff:.5f} v2_qa={r.v2_qa:.5f} v4_eff={r.v4_eff:.5f} v4_qa={r.v4_qa:.5f}")
    return 0


def cmd_thermal(run: Runner, args) -> int:
    obs = analysis.OBSERVABLES[args.observable]
    spec = run.spectrum()
    rows = []
    fits = []
    for beta in sorted(args.beta):
        cfg = analysis.ThermalConfig(beta, obs)
        exact = analysis.thermal_expectation_exact(spec, cfg)
        T = beta * run.action.hbar
        try:
            r = fit.fit_quantum_action(
                fit.FitConfig(T, fit.boundary_pairs(tuple(run.cfg.fit.interval), run.cfg.fit.j_points),
                              **run.fit_kwargs()),
                run.source(), run.action)
            qa = analysis.thermal_expectation_quantum_action(r, cfg, tuple(run.cfg.thermal_range))
            fits.append(r.to_dict())
        except QuantumActionError as exc:
            run.failures.append((f"beta={beta:g}", str(exc)))
            qa = float("nan")
        rows.append((beta, exact, qa))
        print(f"beta={beta:g} <{args.observable}>_exact={exact:.6f} <{args.observable}>_qa={qa:.6f}")
    analysis.write_thermal_csv(run.out / "thermal.csv", rows)
    run.write_json("thermal_fits.json", fits)
    return run.finish()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quantum-action", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides config output_dir)")
        sp.add_argument("--threads", type=int, default=1, help="number of concurrent fits")
        sp.set_defaults(func=func)
        return sp

    add("spectrum", cmd_spectrum, "eigenstates, E_gr and T_sc")
    sp = add("fit", cmd_fit, "quantum action over the configured intervals")
    sp.add_argument("--T", type=_positive, required=True)
    sp = add("sweep", cmd_sweep, "quantum action versus transition time")
    sp.add_argument("--T-list", dest="T_list", type=_positive_list, required=True)
    sp = add("instanton", cmd_instanton, "instanton trajectories and actions versus T")
    sp.add_argument("--T-list", dest="T_list", type=_positive_list, required=True)
    sp.add_argument("--t-max", dest="t_max", type=_positive, default=5.0)
    sp.add_argument("--n-times", dest="n_times", type=int, default=201)
    sp = add("effective", cmd_effective, "one-loop effective versus quantum action coefficients")
    sp.add_argument("--lambda-list", dest="lambda_list", type=_float_list, required=True)
    sp.add_argument("--T", type=_positive, default=4.0)
    sp = add("thermal", cmd_thermal, "thermal expectation values, exact and via the quantum action")
    sp.add_argument("--beta", type=_positive_list, required=True)
    sp.add_argument("--observable", choices=sorted(analysis.OBSERVABLES), default="x2")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or cfg.output_dir)
    try:
        run = Runner(cfg, out, args.threads)
        # --threads sets concurrent fits; BLAS stays single-threaded because its
        # reduction order, and hence the last bits of every kernel, depends on the thread count
        with threadpool_limits(limits=1):
            return args.func(run, args)
    except QuantumActionError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
