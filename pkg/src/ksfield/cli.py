"""Command-line entry point binding configuration, the simulation loop, the
radial benchmark, and the experiment diagnostics into reproducible commands.

Exit codes: 0 success, 2 configuration error, 3 numerical abort (blow-up),
4 I/O error.  If the environment variable KSFIELD_OUT_ROOT is set, relative
--out paths are resolved beneath it.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, SimulationConfig, config_to_dict, load_config
from .diagnostics import (
    blowup_scan,
    convergence_batch_experiment,
    convergence_dt_experiment,
    lipschitz_experiment,
    validation_cdf_error,
    write_blowup_csv,
)
from .radial_fdm import FdmStabilityError, fdm_cdf, solve_radial
from .simulation import NonFiniteFieldError, SnapshotPolicy, resume, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

# Published reference value for the ball-validation configuration.
REFERENCE_MEAN_CDF_ERROR = 0.05512


def _resolve_out(path_str: str) -> Path:
    p = Path(path_str)
    root = os.environ.get("KSFIELD_OUT_ROOT")
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_cfg(args) -> SimulationConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    if getattr(args, "trials", None) is not None:
        cfg = cfg.with_overrides(trials=args.trials)
    return cfg


def _write_manifest(out: Path, command: str, cfg: SimulationConfig | None, wall_s: float,
                    extra: dict) -> None:
    manifest = {
        "command": command,
        "seed": cfg.seed if cfg else None,
        "config": config_to_dict(cfg) if cfg else None,
        "versions": {
            "ksfield": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        "wall_time_s": wall_s,
    }
    manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")


def _csv_ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _csv_floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x]


# ---------------------------------------------------------------------------
# Subcommand bodies (each returns a manifest-extra dict).


def _cmd_run(args, cfg, out: Path) -> dict:
    policy = SnapshotPolicy(every_k_steps=args.snapshot_every)
    state = run(cfg, policy, out_dir=out)
    return {
        "final_step": state.step,
        "final_time": state.time,
        "stability_violations": state.stability_violations,
        "counters": state.counters.as_dict(),
    }


def _cmd_resume(args, cfg, out: Path) -> dict:
    state = resume(out, policy=SnapshotPolicy(every_k_steps=args.snapshot_every))
    return {"final_step": state.step, "final_time": state.time}


def _cmd_validate_fdm(args, cfg, out: Path) -> dict:
    sol = solve_radial(cfg, n_r=args.nr, dt_fdm=args.dt_fdm)
    F = fdm_cdf(sol)
    path = out / "fdm_solution.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["r", "rho", "c", "F"])
        for r, rho, c, Fv in zip(sol.r, sol.rho, sol.c, F):
            w.writerow([f"{r:.10g}", f"{rho:.10g}", f"{c:.10g}", f"{Fv:.10g}"])
    return {"n_r": args.nr, "dt_fdm": args.dt_fdm, "total_mass": sol.total_mass()}


def _cmd_validate(args, cfg, out: Path) -> dict:
    seeds = [cfg.seed + i for i in range(cfg.trials)]
    bench = solve_radial(cfg, n_r=args.nr, dt_fdm=args.dt_fdm)
    result = validation_cdf_error(cfg, benchmark=bench, seeds=seeds)
    path = out / "validation_cdf.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["r", "F_fdm"])
        for r, Fv in zip(result["radii"], result["fdm_cdf"]):
            w.writerow([f"{r:.10g}", f"{Fv:.10g}"])
    print(f"relative CDF error per seed: {[f'{e:.5f}' for e in result['errors']]}")
    print(f"mean relative CDF error: {result['mean_error']:.5f}")
    return {
        "errors": result["errors"],
        "mean_error": result["mean_error"],
        "reference_mean_error": REFERENCE_MEAN_CDF_ERROR,
    }


def _cmd_convergence_dt(args, cfg, out: Path) -> dict:
    T = cfg.t_final
    dt_list = args.dt_list or [T * 2.0**-k for k in range(8, 3, -1)]
    rec = convergence_dt_experiment(cfg, dt_list, trials=cfg.trials, dt_ref=args.dt_ref)
    rec.write_csv(out / "convergence_dt.csv")
    print(f"fitted dt slope: {rec.slope:.4f}")
    return {"slope": rec.slope, "errors": rec.errors, "dt_list": rec.axis,
            "dt_ref": rec.extra["dt_ref"]}


def _cmd_convergence_batch(args, cfg, out: Path) -> dict:
    rec = convergence_batch_experiment(cfg, args.batch_sizes, trials=cfg.trials)
    rec.write_csv(out / "convergence_batch.csv")
    print(f"fitted batch slope: {rec.slope:.4f}")
    return {"slope": rec.slope, "errors": rec.errors, "R_list": rec.axis}


def _cmd_blowup_scan(args, cfg, out: Path) -> dict:
    t_final = args.t_final or cfg.t_final
    probes = args.probe_times or list(np.linspace(t_final / 10, t_final, 10))
    rec = blowup_scan(cfg, args.masses, args.modes, t_final, probes)
    write_blowup_csv(rec, out / "blowup_scan.csv")
    for M0 in rec.axis:
        print(f"M0 = {M0:g}: {rec.extra['classification'][M0]}")
    return {
        "classification": {str(k): v for k, v in rec.extra["classification"].items()},
        "divergence_ratios": rec.errors,
        "masses": rec.axis,
        "modes": rec.extra["H_list"],
    }


def _cmd_lipschitz(args, cfg, out: Path) -> dict:
    rec = lipschitz_experiment(cfg, args.modes, n_pairs=args.pairs)
    path = out / "lipschitz.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["H", "lipschitz_constant"])
        for H, val in zip(rec.axis, rec.errors):
            w.writerow([H, f"{val:.8g}"])
    for H, val in zip(rec.axis, rec.errors):
        print(f"H = {H}: L(H) = {val:.6g}")
    return {"H_list": rec.axis, "lipschitz": rec.errors}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ksfield", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker count; numerical artifacts do not depend on it")
        p.add_argument("--trials", type=int, default=None, help="override config trials")

    p = sub.add_parser("run", help="execute one simulation run")
    common(p)
    p.add_argument("--snapshot-every", type=int, default=None, metavar="K")

    p = sub.add_parser("resume", help="continue a checkpointed run to its final time")
    common(p, config_required=False)
    p.add_argument("--snapshot-every", type=int, default=None, metavar="K")

    p = sub.add_parser("validate-fdm", help="radial benchmark solve, CSV of (r, rho, c, F)")
    common(p)
    p.add_argument("--nr", type=int, default=2000)
    p.add_argument("--dt-fdm", type=float, default=1e-5)

    p = sub.add_parser("validate", help="CDF comparison against the radial benchmark")
    common(p)
    p.add_argument("--nr", type=int, default=2000)
    p.add_argument("--dt-fdm", type=float, default=1e-5)

    p = sub.add_parser("convergence-dt", help="time-step convergence study")
    common(p)
    p.add_argument("--dt-list", type=_csv_floats, default=None,
                   help="comma-separated dt values (default T/256..T/16)")
    p.add_argument("--dt-ref", type=float, default=None,
                   help="reference dt (default T/8192)")

    p = sub.add_parser("convergence-batch", help="batch-size convergence study")
    common(p)
    p.add_argument("--batch-sizes", type=_csv_ints, default=[100, 200, 400, 800, 1600])

    p = sub.add_parser("blowup-scan", help="max-c divergence scan across resolutions")
    common(p)
    p.add_argument("--masses", type=_csv_floats, default=[40.0, 100.0])
    p.add_argument("--modes", type=_csv_ints, default=[8, 12, 16])
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--probe-times", type=_csv_floats, default=None)

    p = sub.add_parser("lipschitz", help="gradient Lipschitz constant vs resolution")
    common(p)
    p.add_argument("--modes", type=_csv_ints, default=[6, 12, 18, 24])
    p.add_argument("--pairs", type=int, default=1000)

    return ap


_COMMANDS = {
    "run": _cmd_run,
    "resume": _cmd_resume,
    "validate-fdm": _cmd_validate_fdm,
    "validate": _cmd_validate,
    "convergence-dt": _cmd_convergence_dt,
    "convergence-batch": _cmd_convergence_batch,
    "blowup-scan": _cmd_blowup_scan,
    "lipschitz": _cmd_lipschitz,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        out = _resolve_out(args.out)
        cfg = _load_cfg(args) if args.config else None
        if cfg is None and args.command != "resume":
            raise ConfigError("--config is required")
        extra = _COMMANDS[args.command](args, cfg, out)
        if cfg is None and args.command == "resume":
            cfg_path = out / "config.json"
            if cfg_path.exists():
                cfg = load_config(cfg_path)
        _write_manifest(out, args.command, cfg, time.perf_counter() - t0, extra)
        return EXIT_OK
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteFieldError, FdmStabilityError) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
