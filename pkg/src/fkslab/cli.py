"""Command-line front end.

Every subcommand writes exactly one JSON document to stdout; everything
else (progress, warnings, errors) goes to stderr.  Exit codes: 0 on
success, 1 for an invalid configuration or input, 2 for a runtime
failure (aborted run, failed oracle check).

A JSON config file (--config) may predefine any part of the run; flags
given on the command line override it field by field.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ._version import __version__
from .diagnostics import sample, theory_constants
from .dynamics import ModelParams
from .experiments import (
    InitialCondition,
    RunConfig,
    load_snapshot,
    run_experiment,
    sweep,
    worker_count,
)
from .kernel import KernelQuadratureConfig, battery_max_rel_error
from .stepping import StepperConfig

log = logging.getLogger("fkslab")

ORACLE_TOLERANCE = 1e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1, not argparse's 2
        raise UsageError(message)


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _parse_ic(text: str, amplitude: float | None) -> dict:
    d: dict = {}
    if text.startswith("snapshot:"):
        d["kind"] = "snapshot"
        d["path"] = text[len("snapshot:") :]
    else:
        d["kind"] = text
    if amplitude is not None:
        d["amplitude"] = amplitude
    return d


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--variant", choices=["fractional", "classic-ks"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--t-end", type=float)
    p.add_argument(
        "--ic",
        help="cos | cos-gauss-sin | random-h3 | snapshot:<path>",
    )
    p.add_argument("--amplitude", type=float)
    p.add_argument("--method", choices=["erk", "etdrk4"])
    p.add_argument("--dt", type=float, help="fixed step (etdrk4) / first trial step (erk)")
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--abs-tol", type=float)
    p.add_argument("--sample-interval", type=float)
    p.add_argument(
        "--snapshot-t",
        type=float,
        action="append",
        help="time at which to persist a snapshot; repeatable",
    )
    p.add_argument("--out", help="output directory for manifest/series/snapshots")
    p.add_argument("--seed", type=int)


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    file_cfg: dict = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")
    pd = dict(file_cfg.get("params", {}))
    sd = dict(file_cfg.get("stepper", {}))
    icd = dict(file_cfg.get("ic", {}))
    rd = {
        k: v
        for k, v in file_cfg.items()
        if k not in ("params", "stepper", "ic")
    }

    for key in ("variant", "gamma", "delta", "eps"):
        val = getattr(args, key)
        if val is not None:
            pd[key] = val
    if args.method is not None:
        sd["method"] = args.method
    if args.dt is not None:
        sd["dt_fixed"] = args.dt
        sd["dt_init"] = args.dt
    if args.rel_tol is not None:
        sd["rel_tol"] = args.rel_tol
    if args.abs_tol is not None:
        sd["abs_tol"] = args.abs_tol
    if args.ic is not None:
        icd.update(_parse_ic(args.ic, args.amplitude))
    elif args.amplitude is not None:
        icd["amplitude"] = args.amplitude
    if args.n is not None:
        rd["n"] = args.n
    if args.t_end is not None:
        rd["t_end"] = args.t_end
    if args.seed is not None:
        rd["seed"] = args.seed
    if args.sample_interval is not None:
        rd["sample_interval"] = args.sample_interval
    if args.snapshot_t:
        rd["snapshot_times"] = list(args.snapshot_t)
    if args.out is not None:
        rd["out_dir"] = args.out

    if "eps" not in pd:
        raise ValueError("eps is required (flag --eps or config params.eps)")
    try:
        params = ModelParams(**pd)
        stepper = StepperConfig(**sd)
        ic = InitialCondition(**icd)
        if "snapshot_times" in rd:
            rd["snapshot_times"] = tuple(rd["snapshot_times"])
        if "fit_range" in rd and rd["fit_range"] is not None:
            rd["fit_range"] = tuple(rd["fit_range"])
        return RunConfig(params=params, stepper=stepper, ic=ic, **rd)
    except TypeError as exc:
        raise ValueError(f"bad configuration: {exc}") from exc


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _build_run_config(args)
    record = run_experiment(cfg)
    _emit(asdict(record.samples[-1]))
    if record.status != "complete":
        log.error("run aborted: %s", record.abort_reason)
        return 2
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    base = _build_run_config(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    record = sweep(base, args.axis, values)
    _emit(asdict(record))
    if any(pt.status != "complete" for pt in record.points):
        log.error("sweep had failed points")
        return 2
    return 0


def _cmd_diagnose(args: argparse.Namespace) -> int:
    field, t, params = load_snapshot(args.snapshot)
    fit_range = None
    if args.fit_lo is not None and args.fit_hi is not None:
        fit_range = (args.fit_lo, args.fit_hi)
    s = sample(field, t, params, fit_range=fit_range)
    _emit(asdict(s))
    return 0


def _cmd_theory(args: argparse.Namespace) -> int:
    params = ModelParams(eps=args.eps, gamma=args.gamma, delta=args.delta)
    tc = theory_constants(
        params, u0_h3=args.u0_h3, u0_linf=args.u0_linf, m_windows=args.m, c=args.c
    )
    payload = asdict(tc)
    payload["lambda"] = payload.pop("lambda_")
    _emit(payload)
    return 0


def _cmd_oracle_check(args: argparse.Namespace) -> int:
    config = KernelQuadratureConfig(
        n_images=args.n_images, quad_points=args.quad_points
    )
    err = battery_max_rel_error(args.alpha, args.n, config, seed=args.seed)
    ok = err < ORACLE_TOLERANCE
    _emit(
        {
            "alpha": args.alpha,
            "n": args.n,
            "quad_points": args.quad_points,
            "n_images": args.n_images,
            "max_rel_error": err,
            "tolerance": ORACLE_TOLERANCE,
            "pass": ok,
        }
    )
    if not ok:
        log.error("kernel battery failed: %.3e >= %.0e", err, ORACLE_TOLERANCE)
        return 2
    return 0


def _cmd_info(args: argparse.Namespace) -> int:
    import scipy

    _emit(
        {
            "version": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "cpu_count": os.cpu_count(),
            "workers": worker_count(),
            "defaults": {
                "run": {"n": RunConfig.__dataclass_fields__["n"].default,
                        "t_end": RunConfig.__dataclass_fields__["t_end"].default,
                        "sample_interval":
                            RunConfig.__dataclass_fields__["sample_interval"].default},
                "stepper": asdict(StepperConfig()),
                "kernel": asdict(KernelQuadratureConfig()),
            },
        }
    )
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="fkslab", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="info logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configuration")
    _add_run_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="vary one coefficient, bracket the transition")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=["gamma", "delta", "eps"])
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_diag = sub.add_parser("diagnose", help="diagnostics of a stored snapshot")
    p_diag.add_argument("--snapshot", required=True)
    p_diag.add_argument("--fit-lo", type=int)
    p_diag.add_argument("--fit-hi", type=int)
    p_diag.set_defaults(func=_cmd_diagnose)

    p_theory = sub.add_parser("theory", help="closed-form constants for given data")
    p_theory.add_argument("--gamma", type=float, required=True)
    p_theory.add_argument("--delta", type=float, required=True)
    p_theory.add_argument("--eps", type=float, required=True)
    p_theory.add_argument("--u0-h3", type=float, required=True,
                          help="L2 norm of the third derivative of u0")
    p_theory.add_argument("--u0-linf", type=float, required=True)
    p_theory.add_argument("--m", type=int, default=2, help="strip subdivision count")
    p_theory.add_argument("--c", type=float, default=1.0,
                          help="order-one constant of the strip estimate")
    p_theory.set_defaults(func=_cmd_theory)

    p_oracle = sub.add_parser(
        "oracle-check", help="kernel quadrature vs spectral multiplier battery"
    )
    p_oracle.add_argument("--alpha", type=float, required=True)
    p_oracle.add_argument("--n", type=int, default=256)
    p_oracle.add_argument("--quad-points", type=int, default=4096)
    p_oracle.add_argument("--n-images", type=int, default=64)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.set_defaults(func=_cmd_oracle_check)

    p_info = sub.add_parser("info", help="version and defaults")
    p_info.set_defaults(func=_cmd_info)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        log.error("runtime failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
