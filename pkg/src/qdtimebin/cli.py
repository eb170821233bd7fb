"""Command-line front end.

    qdtimebin [--config PATH] [--out DIR] [--workers N] [--fast] COMMAND [options]

Commands: populations, g3, phase-sweep, dephasing-sweep, optimal-t, validate.
Exit status: 0 success, 1 a physics check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, validation
from .config import ConfigError, RunConfig, eval_number, load
from .io import write_csv
from .regression import CorrelationGrid, CorrelatorEngine, G3Request, g3

log = logging.getLogger("qdtimebin")

EXIT_OK, EXIT_PHYSICS, EXIT_USAGE = 0, 1, 2
TAU_CHUNK = 32


class UsageError(Exception):
    pass


def _number(text: str) -> float:
    try:
        return eval_number(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common(parser: argparse.ArgumentParser, defaults: bool) -> None:
    # registered on the main parser and on every subcommand, so the flags may
    # appear before or after the command name
    d = {} if defaults else {"default": argparse.SUPPRESS}
    parser.add_argument("--config", metavar="PATH", help="key = value run configuration", **d)
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides run.out)", **d)
    parser.add_argument("--workers", type=int, metavar="N", help="worker processes for sweeps", **d)
    parser.add_argument("--fast", action="store_true", help="coarser correlator lattice (tau_p / 4)",
                        **({} if defaults else {"default": argparse.SUPPRESS}))
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr",
                        **({} if defaults else {"default": argparse.SUPPRESS}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdtimebin", description=__doc__.splitlines()[0])
    _common(parser, defaults=True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("populations", help="two-pulse population transfer")
    _common(p, defaults=False)

    p = sub.add_parser("g3", help="triple-coincidence correlation G3(tau)")
    _common(p, defaults=False)
    p.add_argument("--tau-min", type=_number, help="lower end of the tau range (default -T_bin)")
    p.add_argument("--tau-max", type=_number, help="upper end of the tau range (default 2T + T_bin)")
    p.add_argument("--phi", type=_number, help="interferometer phase")
    p.add_argument("--T", dest="T", type=_number, help="interferometer delay")

    p = sub.add_parser("phase-sweep", help="central-peak P_c against phase, and its visibility")
    _common(p, defaults=False)
    p.add_argument("--T", dest="T", type=_number, help="interferometer delay")
    p.add_argument("--phi-points", type=int, help="phases on [0, pi] (at least 4)")

    p = sub.add_parser("dephasing-sweep", help="visibility against pure dephasing rate")
    _common(p, defaults=False)
    p.add_argument("--T", dest="T", type=_number, help="interferometer delay")

    p = sub.add_parser("optimal-t", help="central-peak P_c against interferometer delay")
    _common(p, defaults=False)

    p = sub.add_parser("validate", help="cross-check evaluation paths and integrator")
    _common(p, defaults=False)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load(args.config) if args.config else RunConfig()
    run = cfg.run
    if args.out is not None:
        run = replace(run, out=args.out)
    if args.workers is not None:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        run = replace(run, workers=args.workers)
    if args.fast:
        run = replace(run, fast=True)
    g = cfg.g3
    for name, key in (("T", "T"), ("phi", "phi"), ("tau_min", "tau_min"), ("tau_max", "tau_max")):
        value = getattr(args, name, None)
        if value is not None:
            g = replace(g, **{key: value})
    sweep = cfg.sweep
    if getattr(args, "phi_points", None) is not None:
        if args.phi_points < 4:
            raise UsageError("--phi-points must be at least 4")
        sweep = replace(sweep, phi_points=args.phi_points)
    cfg = replace(cfg, run=run, g3=g, sweep=sweep)
    if not 0 < g.T_bin < g.T:
        raise UsageError(f"need 0 < T_bin < T, got T_bin = {g.T_bin}, T = {g.T}")
    return cfg


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.run.out) / name


def _emit(**values) -> None:
    for key, value in values.items():
        print(f"{key}={value}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_populations(cfg: RunConfig) -> int:
    traj = analysis.two_pulse_run(cfg.system, cfg.pulses, cfg.stepper, cfg.run.max_photons, cfg.run.t_end)
    path = _out(cfg, "populations.csv")
    traj.to_csv(path, elements=[(s, s) for s in ("m", "u", "Y", "Gp", "y", "G", "g")], header=cfg.header())
    p1, p2 = analysis.pulse_probabilities(traj, cfg.pulses)
    _emit(p1=p1, p2=p2,
          max_rho_uu=float(np.max(traj.element("u", "u").real)),
          max_rho_GpGp=float(np.max(traj.element("Gp", "Gp").real)),
          final_rho_mm=float(traj.element("m", "m")[-1].real),
          config_hash=cfg.hash(), output=path)
    return EXIT_OK


def g3_request(cfg: RunConfig) -> G3Request:
    g = cfg.g3
    base = G3Request.default(cfg.pulses, T=g.T, phi=g.phi, fast=cfg.run.fast, T_bin=g.T_bin,
                             lattice_step=g.lattice_step, quadrature=g.quadrature,
                             phase_offset=g.phase_offset)
    lo = -g.T_bin if g.tau_min is None else g.tau_min
    hi = 2 * g.T + g.T_bin if g.tau_max is None else g.tau_max
    h = base.lattice_step
    grid = h * np.arange(math.ceil(lo / h - 1e-9), math.floor(hi / h + 1e-9) + 1)
    if len(grid) == 0:
        raise UsageError(f"tau range [{lo:.6g}, {hi:.6g}] holds no lattice point (step {h:.6g})")
    return base.with_tau_grid(grid)


def cmd_g3(cfg: RunConfig) -> int:
    req = g3_request(cfg)
    engine = CorrelatorEngine(cfg.system, cfg.pulses, cfg.stepper, req.lattice_step)
    grid_all = np.array(req.tau_grid)
    parts = []
    for start in range(0, len(grid_all), TAU_CHUNK):
        chunk = grid_all[start:start + TAU_CHUNK]
        part = g3(req.with_tau_grid(chunk), cfg.system, cfg.pulses, cfg.stepper, engine=engine)
        for tau, value in zip(part.tau, part.values):
            log.info("tau = %.6g  G3 = %.6g", tau, value)
        parts.append(part)
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
    grid = CorrelationGrid(req, cat("tau"), cat("values"), cat("direct"), cat("cross"),
                           parts[0].phase_offset, cat("values_half"), cat("direct_half"),
                           cat("cross_half"))
    path = _out(cfg, "g3.csv")
    grid.to_csv(path, header=cfg.header())
    peaks = analysis.peak_positions(grid)
    _emit(tau_points=len(grid.tau), peaks=", ".join(f"{p:.6g}" for p in peaks),
          config_hash=cfg.hash(), output=path)
    return EXIT_OK


def _phi_grid(cfg: RunConfig) -> np.ndarray:
    return analysis.default_phi_grid(cfg.sweep.phi_points)


def cmd_phase_sweep(cfg: RunConfig) -> int:
    g = cfg.g3
    res = analysis.phase_sweep(cfg.system, cfg.pulses, g.T, g.T_bin, _phi_grid(cfg), cfg.stepper,
                               cfg.run.fast, lattice_step=g.lattice_step, quadrature=g.quadrature,
                               phase_offset=g.phase_offset)
    path = _out(cfg, "phase_sweep.csv")
    res.to_csv(path, header=cfg.header())
    _emit(visibility=res.visibility, visibility_fit=res.fit.visibility,
          fit_relative_residual=res.fit.relative_residual,
          exceeds_bell=res.exceeds_bell, config_hash=cfg.hash(), output=path)
    return EXIT_OK


def cmd_dephasing_sweep(cfg: RunConfig) -> int:
    g = cfg.g3
    res = analysis.sweep_dephasing(cfg.sweep.gamma_d, cfg.system, cfg.pulses, g.T, g.T_bin,
                                   _phi_grid(cfg), cfg.stepper, cfg.run.fast, cfg.run.workers)
    path = _out(cfg, "dephasing_sweep.csv")
    res.to_csv(path, header=cfg.header())
    for gd, v in zip(res.values, res.visibilities):
        print(f"gamma_d={float(gd)!r} V={float(v)!r}")
    _emit(non_increasing=res.is_non_increasing(), config_hash=cfg.hash(), output=path)
    return EXIT_OK


def cmd_optimal_t(cfg: RunConfig) -> int:
    res = analysis.find_optimal_T(cfg.sweep.T_values, cfg.system, cfg.pulses, cfg.g3.T_bin,
                                  cfg.stepper, cfg.run.fast, cfg.run.workers)
    path = _out(cfg, "optimal_t.csv")
    res.to_csv(path, header=cfg.header())
    _emit(T_star=res.T_star, T_star_over_pi=res.T_star / math.pi, config_hash=cfg.hash(), output=path)
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    checks = validation.run_all(cfg.system, cfg.pulses, cfg.stepper, cfg.g3.T, cfg.run.t_end)
    rows = []
    for c in checks:
        print(c.line())
        rows.append([float(c.passed), c.value, c.tolerance])
    head = cfg.header()
    head.update({f"check{i}": c.name for i, c in enumerate(checks)})
    write_csv(_out(cfg, "validate.csv"), ["passed", "value", "tolerance"], rows, header=head)
    failed = [c.name for c in checks if not c.passed]
    _emit(checks=len(checks), failed=len(failed), config_hash=cfg.hash())
    return EXIT_PHYSICS if failed else EXIT_OK


COMMANDS = {
    "populations": cmd_populations,
    "g3": cmd_g3,
    "phase-sweep": cmd_phase_sweep,
    "dephasing-sweep": cmd_dephasing_sweep,
    "optimal-t": cmd_optimal_t,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            return COMMANDS[args.command](cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
