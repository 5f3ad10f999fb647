"""``microdrift`` command-line tool.

Every subcommand assembles a configuration (``--config`` file overlaid with
explicit flags), runs, and writes its primary output:

* ``--out file.csv`` / ``--out file.json`` writes that one file,
* ``--out dir`` persists the full run record (``run.json``, ``config.json``,
  CSVs and SVG plots) into the directory,
* no ``--out`` prints the primary output to stdout.

Exit codes: 0 success, 2 validation, 3 numeric failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import average
from .config import CONFIG_DEFAULTS, ConfigError, config_from_dict, load_config, public_config, read_json
from .drift import DriftConfig, ResonantProblem, epsilon_sweep, micro_drift_run
from .integrators import integrate
from .lattice import SmallDivisorProfile, adapted_system
from .normal_form import verify_remainder_scaling
from .reporting import (NORMAL_FORM_COLUMNS, PSI_COLUMNS, SWEEP_COLUMNS, RunRecord, atomic_write_many,
                        canonical_json, csv_text, emit_plots, persist_run, plot_contents, trajectory_columns)

logger = logging.getLogger("microdrift")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# -- argument helpers ---------------------------------------------------------

def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _decades(text):
    """``"1e-2:1e-6:9"`` -> 9 log-spaced values from 1e-2 down to 1e-6."""
    try:
        hi, lo, num = text.split(":")
        return [float(v) for v in np.geomspace(float(hi), float(lo), int(num))]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP:COUNT, got {text!r}") from None


def _global_flags():
    # SUPPRESS lets the flags appear before or after the subcommand.
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON experiment configuration")
    p.add_argument("--out", default=argparse.SUPPRESS,
                   help="output file (.csv/.json) or directory for the full run record")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes for sweeps")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for scrambled sampling")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="microdrift", parents=[common],
                                     description="Micro-instability experiments near resonant actions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    def system_args(p, resonance=True):
        p.add_argument("--system", help="system JSON file")
        if resonance:
            p.add_argument("--resonance", help="resonance JSON file (else taken from the system file)")

    def divisor_args(p):
        p.add_argument("--omega-tilde", type=_floats, dest="omega_tilde", help="non-resonant frequency block")
        p.add_argument("--qmax", type=int, dest="q_max", help="largest truncation order")

    p = add("psi", "small-divisor table Psi(Q)")
    divisor_args(p)
    system_args(p)

    p = add("delta", "Delta(x)")
    p.add_argument("--x", type=float, dest="x")
    divisor_args(p)

    p = add("mu", "mu(sqrt(eps)) = 1 / Delta(kappa / sqrt(eps))")
    p.add_argument("--eps", type=float)
    p.add_argument("--kappa", type=float)
    divisor_args(p)

    p = add("average", "resonant average and its derived constants")
    system_args(p)

    p = add("normalform-check", "sampled remainder estimates over an eps list")
    system_args(p)
    p.add_argument("--eps-list", type=_floats, dest="eps_list")
    p.add_argument("--samples", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--qmax", type=int, dest="q_max")

    p = add("integrate", "implicit-midpoint trajectory")
    system_args(p, resonance=False)
    p.add_argument("--theta0", type=_floats)
    p.add_argument("--i0", type=_floats)
    p.add_argument("--T", type=float, dest="T")
    p.add_argument("--step", type=float, dest="h_step")
    p.add_argument("--eps", type=float)
    p.add_argument("--samples-out", type=int, dest="samples_out")

    for name, help_text in (("drift", "one micro-drift run"), ("sweep", "micro-drift runs over an eps sweep")):
        p = add(name, help_text)
        system_args(p)
        p.add_argument("--kappa", type=float)
        p.add_argument("--mu0", type=float)
        p.add_argument("--qmax", type=int, dest="q_max")
        p.add_argument("--step", type=float, dest="h_step")
        p.add_argument("--theta-transverse", type=_floats, dest="theta_transverse")
        p.add_argument("--phase-sweep", type=int, dest="phase_sweep")
        p.add_argument("--samples-out", type=int, dest="samples_out")
        if name == "drift":
            p.add_argument("--eps", type=float)
        else:
            group = p.add_mutually_exclusive_group()
            group.add_argument("--eps-list", type=_floats, dest="eps_list", help="comma-separated eps values")
            group.add_argument("--eps-decades", type=_decades, dest="eps_list", help="START:STOP:COUNT")

    p = add("plot", "SVG plots from a persisted run record")
    p.add_argument("--run", required=True, help="run.json to plot")
    return parser


_NOT_CONFIG = {"command", "config", "out", "run", "system", "resonance"}


def resolve_config(args) -> dict:
    """Config file (if any) overlaid with explicit flags, validated and parsed."""
    doc = {}
    if getattr(args, "config", None):
        doc = public_config(load_config(args.config))
    if getattr(args, "system", None):
        doc["system"] = read_json(args.system)
        doc.pop("resonance", None)
    if getattr(args, "resonance", None):
        doc["resonance"] = read_json(args.resonance)
    for key, value in vars(args).items():
        if key in _NOT_CONFIG or value is None:
            continue
        if args.command == "integrate" and key == "eps":
            # integrate runs the system as given; --eps overrides its epsilon
            if isinstance(doc.get("system"), dict):
                doc["system"] = {**doc["system"], "epsilon": value}
            continue
        if key == "threads" or key in CONFIG_DEFAULTS or key in ("omega_tilde", "x", "theta0", "i0", "T"):
            doc[key] = value
    if doc.get("resonance") is None:
        doc.pop("resonance", None)
    return config_from_dict(doc, getattr(args, "config", None) or "<command line>")


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) is None and cfg.get("_" + key) is None:
            raise ConfigError(f"missing required setting {key!r}")


def _omega_tilde(cfg):
    if cfg.get("omega_tilde") is not None:
        return cfg["omega_tilde"]
    if cfg.get("_resonance") is not None:
        return list(cfg["_resonance"].omega_tilde)
    raise ConfigError("missing required setting 'omega_tilde' (or a system with a resonance)")


def _profile(cfg):
    return SmallDivisorProfile.build(_omega_tilde(cfg), cfg["q_max"], cfg["kappa"])


def _problem(cfg, require_a2=True):
    _require(cfg, "system", "resonance")
    return ResonantProblem.build(cfg["_system"], cfg["_resonance"], cfg["kappa"], cfg["q_max"], require_a2)


def _drift_config(cfg, eps):
    theta = cfg.get("theta_transverse")
    return DriftConfig(eps=eps, theta_transverse=tuple(theta) if theta is not None else None,
                       kappa=cfg["kappa"], mu0=cfg["mu0"], h_step=cfg.get("h_step"),
                       samples_out=cfg["samples_out"], phase_sweep=cfg["phase_sweep"])


# -- commands -----------------------------------------------------------------
# Each returns (reports dict, primary output text, primary suffix).

def cmd_psi(cfg):
    profile = _profile(cfg)
    rows = [{"Q": int(q), "min_divisor": float(m), "psi": float(p)}
            for q, m, p in zip(profile.Q, profile.min_divisor, profile.psi)]
    return {"psi": {"omega_tilde": list(profile.omega_tilde), "rows": rows}}, csv_text(PSI_COLUMNS, rows), ".csv"


def cmd_delta(cfg):
    _require(cfg, "x")
    profile = _profile(cfg)
    rep = {"x": cfg["x"], "delta": profile.delta(cfg["x"]), "exact_tail": profile.exact_tail}
    return {"scalar": rep}, canonical_json(rep), ".json"


def cmd_mu(cfg):
    profile = _profile(cfg)
    eps = cfg["eps"]
    rep = {"eps": eps, "kappa": cfg["kappa"], "mu": profile.mu(np.sqrt(eps))}
    return {"scalar": rep}, canonical_json(rep), ".json"


def cmd_average(cfg):
    _require(cfg, "system", "resonance")
    res = cfg["_resonance"]
    av = average(adapted_system(cfg["_system"], res).f, res.d)
    modes = [{"k": list(k), "coeff": [[list(a), [complex(c).real, complex(c).imag]] for a, c in p.terms.items()]}
             for k, p in av.f_omega.mode_table.items()]
    rep = {"d": res.d, "A": res.A, "omega_tilde": list(res.omega_tilde), "f_omega_modes": modes,
           "theta_star": av.theta_star, "lambda": av.lam, "L": av.L, "delta": av.delta, "c": av.c}
    return {"average": rep}, canonical_json(rep), ".json"


def cmd_normalform_check(cfg):
    _require(cfg, "system", "resonance")
    res = cfg["_resonance"]
    system = adapted_system(cfg["_system"], res)
    profile = SmallDivisorProfile.build(res.omega_tilde, cfg["q_max"], cfg["kappa"])
    out = verify_remainder_scaling(system, res.d, profile, cfg["eps_list"], samples=cfg["samples"], seed=cfg["seed"])
    rows = [r.as_row() for r in out["reports"]]
    rep = {"rows": rows, "slopes": out["slopes"], "bound_slopes": out["bound_slopes"], "C": out["C"],
           "spread": out["spread"], "Q": out["Q"]}
    return {"normal_form": rep}, csv_text(NORMAL_FORM_COLUMNS, rows), ".csv"


def cmd_integrate(cfg):
    _require(cfg, "system", "theta0", "i0", "T")
    system = cfg["_system"]
    T = cfg["T"]
    traj = integrate(system, cfg["theta0"], cfg["i0"], T, h_step=cfg.get("h_step"),
                     dt_out=abs(T) / cfg["samples_out"] if T else None)
    cols = trajectory_columns(system.n)
    rows = [[t, *th, *I, e] for t, th, I, e in zip(traj.t, traj.theta, traj.I, traj.energy)]
    rep = {"columns": cols, "rows": rows, "relative_energy_drift": traj.relative_energy_drift,
           "step_size": traj.step_size, "steps": traj.steps}
    return {"trajectory": rep}, csv_text(cols, rows), ".csv"


def cmd_drift(cfg):
    problem = _problem(cfg)
    report = micro_drift_run(problem, _drift_config(cfg, cfg["eps"]))
    rep = report.to_dict(series=True)
    summary = {k: v for k, v in rep.items() if k != "series"}
    return {"drift": rep}, canonical_json(summary), ".json"


def cmd_sweep(cfg):
    problem = _problem(cfg)
    eps_list = cfg["eps_list"]
    result = epsilon_sweep(problem, eps_list, _drift_config(cfg, max(eps_list)), workers=cfg["threads"])
    rows = [r.as_row() for r in result.reports]
    rep = {"rows": rows, "slope": result.slope, "intercept": result.intercept, "residual": result.residual,
           "transverse_slope": result.transverse_slope, "C_values": result.C_values, "C_spread": result.C_spread,
           "all_passed": result.all_passed, "reports": [r.to_dict() for r in result.reports]}
    return {"sweep": rep}, csv_text(SWEEP_COLUMNS, rows), ".csv"


COMMANDS = {"psi": cmd_psi, "delta": cmd_delta, "mu": cmd_mu, "average": cmd_average,
            "normalform-check": cmd_normalform_check, "integrate": cmd_integrate, "drift": cmd_drift,
            "sweep": cmd_sweep}


def _plot(args):
    record = RunRecord.load(args.run)
    out = getattr(args, "out", None) or str(Path(args.run).parent)
    paths = emit_plots(record, out)
    for path in paths:
        print(path)
    return EXIT_OK


def _write_output(args, record, text, suffix):
    out = getattr(args, "out", None)
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    if out.suffix:
        atomic_write_many(out.parent if str(out.parent) else ".", {out.name: text})
        return
    persist_run(record, out)
    plots = plot_contents(record)
    if plots:
        atomic_write_many(out, plots)
    logger.info("run %s written to %s", record.run_id, out)


def run(args) -> int:
    if args.command == "plot":
        return _plot(args)
    cfg = resolve_config(args)
    t0 = time.perf_counter()
    reports, text, suffix = COMMANDS[args.command](cfg)
    elapsed = time.perf_counter() - t0
    record = RunRecord(args.command, public_config(cfg), reports, {"compute_seconds": elapsed})
    _write_output(args, record, text, suffix)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="microdrift: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except ArithmeticError as exc:
        print(f"microdrift: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, json.JSONDecodeError) as exc:
        print(f"microdrift: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"microdrift: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
