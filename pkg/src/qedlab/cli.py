"""Command-line interface: ``qedlab <subcommand> [--config FILE] [--seed N] [--out DIR] [--threads N]``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical runtime
error, 4 shape/precondition error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis, calibrate, potential as pot
from .config import ExperimentConfig, load_config
from .errors import (ConfigError, DegenerateObservation, EmptySample, NegativePrice,
                     NonIntegrable, ShapeError)
from .models import GBM, Langevin, Micro, model_to_dict, with_sigma
from .simulate import SimConfig, quasi_stationary_histogram, simulate
from .svg import Panel, render

log = logging.getLogger("qedlab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SHAPE = 0, 2, 3, 4


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o)}")


def _clean(v):
    """NaN/inf are not valid JSON; emit null."""
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _potential_of(cfg: ExperimentConfig) -> pot.QuarticPotential:
    m = cfg.model.build()
    if isinstance(m, Langevin):
        return m.potential
    if isinstance(m, GBM):
        return pot.QuarticPotential.gbm(m.mu)
    if isinstance(m, Micro):
        return m.mapped_potential()
    raise ConfigError("model kind 'abm' has no quartic potential")


def _plot_range(p: pot.QuarticPotential, report: pot.ShapeReport) -> tuple[float, float]:
    locs = [c.location for c in report.critical_points]
    lo, hi = min(locs + [0.0]), max(locs + [0.0])
    span = max(hi - lo, 1.0)
    return lo - 0.35 * span, hi + 0.35 * span


def cmd_potential(cfg: ExperimentConfig, out: Path) -> dict:
    p = _potential_of(cfg)
    report = pot.classify(p, cfg.potential.tol)
    lo, hi = cfg.potential.x_range or _plot_range(p, report)
    result = {"potential": p.to_dict(), **report.to_dict()}
    _dump_json(_clean(result), out / "potential_report.json")
    if cfg.plot:
        x, u = pot.grid(p, lo, hi, cfg.potential.points)
        panel = Panel(f"U(x): {report.shape_label.value}", "x", "U(x)")
        panel.line(x, u, "U")
        cps = [c for c in report.critical_points if lo <= c.location <= hi]
        panel.points([c.location for c in cps], [c.potential_value for c in cps],
                     "critical points")
        (out / "potential.svg").write_text(render([panel]))
    return result


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads: int | None) -> dict:
    m = cfg.model.build()
    sc = cfg.sim.build()
    ens = simulate(m, sc, threads=threads)
    ens.to_csv(out / "ensemble.csv")
    if cfg.sim.binary:
        ens.save_binary(out / "ensemble.qede")
    summary = {"model": model_to_dict(m), "sim": cfg.sim.model_dump(),
               "n_paths": ens.n_paths, "n_times": int(ens.times.size)}
    if cfg.analysis.moments:
        summary["moments"] = analysis.moment_report(ens).to_dict()
    if cfg.analysis.default_probability and m.multiplicative:
        summary["default"] = analysis.default_probability_mc(m, sc, ensemble=ens).to_dict()
    if cfg.analysis.histogram_window is not None:
        h = analysis_histogram(ens, cfg)
        summary["histogram"] = h
    _dump_json(_clean(summary), out / "summary.json")
    if cfg.plot:
        panel = Panel("sample paths", "t", "X")
        for i in range(min(ens.n_paths, 10)):
            panel.line(ens.times, ens.values[i], f"path_{i}")
        mr = analysis.moment_report(ens)
        mpanel = Panel("ensemble mean", "t", "E[X]")
        mpanel.line(ens.times, mr.mean, "mean")
        (out / "simulate.svg").write_text(render([panel, mpanel]))
    return summary


def analysis_histogram(ens, cfg: ExperimentConfig) -> dict:
    h = quasi_stationary_histogram(ens, cfg.analysis.histogram_window, cfg.analysis.histogram_bins)
    return {"mode": h.mode, "edges": h.edges.tolist(), "density": h.density.tolist(),
            "n_samples": h.n_samples}


def cmd_default(cfg: ExperimentConfig, out: Path, threads: int | None) -> dict:
    """Absorption probability on a sigma x horizon grid.

    Each sigma runs once to the longest horizon with the same seed; shorter
    horizons read off the absorption times, so rows are monotone in horizon.
    """
    m = cfg.model.build()
    if not m.multiplicative:
        raise ConfigError("default-prob needs a multiplicative model")
    horizons = sorted(cfg.default.horizon_grid)
    base = cfg.sim.build()
    rows = []
    for s in cfg.default.sigma_grid:
        sc = SimConfig(dt=base.dt, horizon=horizons[-1], n_paths=base.n_paths,
                       master_seed=base.master_seed, x0=base.x0,
                       absorb_threshold=base.absorb_threshold,
                       record_every=max(1, int(round(horizons[-1] / base.dt))))
        ens = simulate(with_sigma(m, s), sc, threads=threads)
        for h in horizons:
            hit = ens.absorbed & (ens.absorbed_at <= h + 1e-12)
            k = int(hit.sum())
            p = k / ens.n_paths
            rows.append({"sigma": s, "horizon": h, "probability": p,
                         "stderr": math.sqrt(p * (1 - p) / ens.n_paths), "n_absorbed": k,
                         "n_paths": ens.n_paths})
    with open(out / "default_table.csv", "w", newline="") as fh:
        fh.write("sigma,horizon,probability,stderr,n_absorbed,n_paths\n")
        for r in rows:
            fh.write(f"{r['sigma']!r},{r['horizon']!r},{r['probability']!r},{r['stderr']!r},"
                     f"{r['n_absorbed']},{r['n_paths']}\n")
    result = {"model": model_to_dict(m), "rows": rows}
    _dump_json(_clean(result), out / "default_table.json")
    if cfg.plot:
        panel = Panel("default probability", "horizon", "P(default)")
        for s in cfg.default.sigma_grid:
            sel = [r for r in rows if r["sigma"] == s]
            panel.line([r["horizon"] for r in sel], [r["probability"] for r in sel], f"sigma={s}")
        (out / "default.svg").write_text(render([panel]))
    return result


def cmd_instanton(cfg: ExperimentConfig, out: Path) -> dict:
    p = _potential_of(cfg)
    sec = cfg.instanton
    kinds = analysis.INSTANTON_KINDS if sec.kind == "all" else (sec.kind,)
    result = {"potential": p.to_dict(), "paths": {}}
    panels = []
    for k in kinds:
        path = analysis.instanton_trajectory(p, k, tuple(sec.t_span), sec.ode_tol, sec.well)
        path.to_csv(out / f"{k}.csv")
        result["paths"][k] = {"n_points": int(path.times.size), "well": path.well,
                              "barrier": path.barrier, "reached_barrier": path.reached_barrier,
                              "duration": float(path.times[-1] - path.times[0])}
        panel = Panel(k.replace("_", "-"), "t", "x")
        panel.line(path.times, path.values, k)
        panels.append(panel)
    _dump_json(_clean(result), out / "instanton.json")
    if cfg.plot:
        (out / "instanton.svg").write_text(render(panels))
    return result


def read_path_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``t,x`` (or an ensemble CSV, using its first path column)."""
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)  # empty body is handled below
                data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read path CSV {path}: {exc}") from exc
    if len(header) < 2 or header[0].strip() != "t" or data.size == 0 or data.shape[1] != len(header):
        raise ConfigError("path CSV must have a header 't,x' and two or more columns")
    if data.shape[0] < 3:
        raise ConfigError("path CSV needs at least three rows")
    return data[:, 0], data[:, 1]


def cmd_calibrate(cfg: ExperimentConfig, out: Path, input_csv: str, dt: float | None) -> dict:
    t, x = read_path_csv(input_csv)
    dts = np.diff(t)
    step = dt if dt is not None else cfg.calibrate.dt
    if step is None:
        step = float(np.mean(dts))
        if not np.allclose(dts, step, rtol=1e-6, atol=1e-12):
            raise ConfigError("observations are not equally spaced; pass --dt")
    x_fit = calibrate.truncate_absorbed(x)
    if x_fit.size < 3:
        raise DegenerateObservation("fewer than three positive observations")
    sec = cfg.calibrate
    res = calibrate.fit(x_fit, step, init_params=sec.init_params, bounds=sec.bounds,
                        opt_tol=sec.opt_tol, max_iter=sec.max_iter)
    result = {"input": str(input_csv), "dt": step, "n_truncated": int(x.size - x_fit.size),
              **res.to_dict()}
    _dump_json(_clean(result), out / "calibration.json")
    return result


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=d, help="master seed (overrides config)")
    parser.add_argument("--out", default=d, help="output directory (overrides config)")
    parser.add_argument("--threads", type=int, default=d,
                        help="worker threads; never changes results (env QEDLAB_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qedlab", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("potential", "shape report and plot of U(x)"),
                        ("simulate", "Monte Carlo ensemble and summary"),
                        ("default-prob", "default probability table over sigma x horizon"),
                        ("instanton", "instanton / anti-instanton / bounce trajectories"),
                        ("calibrate", "fit (theta, kappa, g, sigma) to a price path")]:
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        if name == "calibrate":
            sp.add_argument("input", help="CSV with header t,x")
            sp.add_argument("--dt", type=float, default=None, help="observation spacing")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        if args.seed is not None:
            overrides["sim.seed"] = args.seed
        if args.out is not None:
            overrides["output_dir"] = args.out
        cfg = load_config(args.config, overrides)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "potential":
            cmd_potential(cfg, out)
        elif args.command == "simulate":
            cmd_simulate(cfg, out, args.threads)
        elif args.command == "default-prob":
            cmd_default(cfg, out, args.threads)
        elif args.command == "instanton":
            cmd_instanton(cfg, out)
        elif args.command == "calibrate":
            cmd_calibrate(cfg, out, args.input, args.dt)
        log.info("wrote outputs to %s", out)
        return EXIT_OK
    except (ConfigError, DegenerateObservation) as exc:
        print(f"qedlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShapeError as exc:
        print(f"qedlab: shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except (NonIntegrable, NegativePrice, EmptySample, ArithmeticError) as exc:
        print(f"qedlab: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
