"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

import argparse
import csv
import dataclasses
import json
import math
import os
import sys

from .errors import AHError, ValidationError
from .pipeline import SWEEP_COLUMNS, load_config, run_pipeline, sweep

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

# report sections shown by each single-stage subcommand
_SECTIONS = {
    "params": ("params",),
    "glue": ("params", "gluing"),
    "solve": ("params", "gluing", "solve"),
    "mass": ("params", "solve", "normalize", "mass"),
    "horizons": ("params", "horizons"),
}
_UPTO = {"params": "params", "glue": "glue", "solve": "solve", "mass": "mass", "horizons": "horizons"}
_CHECKED = {"gluing", "solve", "normalize", "mass", "horizons"}


def _common(p, multi=False):
    nargs = "+" if multi else None
    p.add_argument("--mass-param", type=float, nargs=nargs, help="mass parameter M (> 0)")
    p.add_argument("--epsilon", type=float, nargs=nargs, help="mollifier scale")
    p.add_argument("--bump-delta", type=float, help="curvature bump amplitude (0 skips normalization)")
    p.add_argument("--grid-n", type=int, help="radial solver nodes")
    p.add_argument("--outer-rho", type=float, help="outer boundary distance beyond tau2")
    p.add_argument("--sphere-res", type=int, nargs=2, metavar=("NTHETA", "NPHI"), help="sphere grid size")
    p.add_argument("--out-dir", help="directory for report and series")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="seed for random test directions")


def build_parser():
    parser = argparse.ArgumentParser(prog="ahhorizons",
                                     description="Asymptotically hyperbolic metrics with horizons.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "params": "family constants and horizon radii",
        "glue": "select the gluing interval and check the glued profile",
        "solve": "mollify the defect and solve the radial problem",
        "mass": "boundary mass of the input family member and of the constructed metric",
        "horizons": "CMC surfaces with H = -2, 0, 2 for the constructed metric",
        "pipeline": "run every stage and write the report",
    }
    for name, text in helps.items():
        _common(sub.add_parser(name, help=text))
    _common(sub.add_parser("sweep", help="pipeline over a grid of (M, epsilon)"), multi=True)
    return parser


def _overrides(args, multi=False):
    o = {
        "bump_delta": args.bump_delta,
        "grid_n": args.grid_n,
        "outer_rho": args.outer_rho,
        "out_dir": args.out_dir,
        "seed": args.seed,
    }
    if not multi:
        o["M"] = args.mass_param
        o["epsilon"] = args.epsilon
    if args.sphere_res:
        o["sphere_theta"], o["sphere_phi"] = args.sphere_res
    return o


def _print(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True, default=float)
    sys.stdout.write("\n")


def _cmd_stage(cfg, command):
    report = run_pipeline(cfg, write=bool(cfg.out_dir), upto=_UPTO[command])
    out = {k: getattr(report, k) for k in _SECTIONS[command]}
    prefixes = _CHECKED.intersection(_SECTIONS[command])
    out["checks"] = {k: v for k, v in report.checks.items() if k.split(".")[0] in prefixes}
    if report.failed_stage:
        out["failed_stage"], out["error"] = report.failed_stage, report.error
    _print(out)
    if report.failed_stage:
        return report.exit_code
    return EXIT_OK if all(c["passed"] for c in out["checks"].values()) else EXIT_NUMERICAL


def _cmd_pipeline(cfg):
    report = run_pipeline(cfg, write=bool(cfg.out_dir))
    _print({"ok": report.ok, "failed_stage": report.failed_stage, "error": report.error,
            "failed_checks": sorted(k for k, v in report.checks.items() if not v["passed"]),
            "M_eps": report.solve.get("M_eps"), "mass": report.mass.get("mass_output"),
            "out_dir": cfg.out_dir})
    return report.exit_code


def _cmd_sweep(cfg, args):
    masses = args.mass_param or [cfg.M]
    epsilons = args.epsilon or [cfg.epsilon]
    for M in masses:
        if not (math.isfinite(M) and M > 0):
            raise ValidationError(f"M must be a positive number, got {M}")
    out_path = None
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        out_path = os.path.join(cfg.out_dir, "sweep.csv")
    rows = sweep(dataclasses.replace(cfg, out_dir=""), masses, epsilons, out_path=out_path)
    if out_path is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in SWEEP_COLUMNS])
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_NUMERICAL


def main(argv=None):
    args = build_parser().parse_args(argv)
    multi = args.command == "sweep"
    try:
        cfg = load_config(args.config, _overrides(args, multi))
        if args.command == "pipeline":
            return _cmd_pipeline(cfg)
        if multi:
            return _cmd_sweep(cfg, args)
        return _cmd_stage(cfg, args.command)
    except AHError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", EXIT_NUMERICAL)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
