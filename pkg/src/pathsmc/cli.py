"""Command-line entry point.

Subcommands:

    run <cfg>             execute one config; append a results row
    sweep <cfg> --axis .. --values ..
                          one run per axis value (particles/steps/methods)
    verify [--filter ..]  run the numerical verification suite
    oracle-sample <cfg> -n N -o FILE
                          dump reference samples from the analytic posterior

Failures print a machine-readable JSON object on stderr and exit
nonzero (2 for configuration errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import rng
from .config import METRIC_SEED_OFFSET, ConfigError, RunConfig, load_config, parse_override
from .harness import append_rows, execute_run, run_sweep
from .reward import tilt_posterior


def _apply_overrides(cfg: RunConfig, items: list[str] | None) -> RunConfig:
    for item in items or []:
        key, value = parse_override(item)
        cfg = cfg.with_override(key, value)
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args.set)
    row, diag = execute_run(cfg)
    append_rows(args.results, [row])
    if args.diagnostics:
        diag.write_csv(args.diagnostics)
    for warning in diag.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(
        f"{row['method']} seed={row['seed']} N={row['N']} steps={row['steps']}: "
        f"mmd={row['mmd']:.4g} swd={row['swd']:.4g} mean_l2={row['mean_l2']:.4g} "
        f"cov_frob={row['cov_frob']:.4g} resamples={row['resamples']} "
        f"runtime_ms={row['runtime_ms']:.0f}"
    )
    return 0


def _parse_values(axis: str, raw: str) -> list:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if axis == "methods":
        return parts
    values = [int(p) for p in parts]
    if any(v <= 0 for v in values):
        raise ConfigError(f"sweep: axis values must be positive, got {values}")
    return values


def _cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args.set)
    values = _parse_values(args.axis, args.values)
    rows = run_sweep(cfg, args.axis, values, jobs=args.jobs)
    append_rows(args.results, rows)
    for row in rows:
        print(
            f"{row['method']} N={row['N']} steps={row['steps']} seed={row['seed']}: "
            f"mmd={row['mmd']:.4g} runtime_ms={row['runtime_ms']:.0f}"
        )
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_checks, write_verification_csv

    rows = run_checks(args.filter)
    if not rows:
        print(f"no checks match filter {args.filter!r}", file=sys.stderr)
        return 1
    for row in rows:
        status = "PASS" if row.passed else "FAIL"
        print(f"{status} {row.test_name} (h={row.h:g} lhs={row.lhs:.6g} rhs={row.rhs:.6g})")
    if args.output:
        write_verification_csv(rows, args.output)
    failed = [r for r in rows if not r.passed]
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return 0 if not failed else 1


def _cmd_oracle_sample(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args.set)
    if args.n < 0:
        raise ConfigError(f"oracle-sample: n must be >= 0, got {args.n}")
    target = cfg.build_target()
    reward = cfg.build_reward(target.dim, cfg.build_schedule().horizon)
    oracle = tilt_posterior(target, reward.base)
    samples = oracle.sample(args.n, rng.stream(cfg.seed + METRIC_SEED_OFFSET, rng.REFERENCE))
    with open(args.output, "w") as fh:
        fh.write(",".join(f"x{j}" for j in range(target.dim)) + "\n")
        for row in samples:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    print(f"wrote {args.n} samples to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathsmc",
        description="Guided-diffusion particle samplers with path-space reweighting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one configuration")
    run_p.add_argument("config")
    run_p.add_argument("--results", default="results.csv", help="results CSV to append to")
    run_p.add_argument("--diagnostics", default=None, help="per-step diagnostics CSV")
    run_p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="run one axis of configurations")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--axis", required=True, choices=("particles", "steps", "methods"))
    sweep_p.add_argument("--values", required=True, help="comma-separated axis values")
    sweep_p.add_argument("--results", default="results.csv")
    sweep_p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sweep_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep_p.set_defaults(func=_cmd_sweep)

    verify_p = sub.add_parser("verify", help="run the numerical verification suite")
    verify_p.add_argument("--filter", default=None, help="substring filter on check names")
    verify_p.add_argument("--output", default=None, help="verification CSV path")
    verify_p.set_defaults(func=_cmd_verify)

    oracle_p = sub.add_parser("oracle-sample", help="sample the analytic posterior")
    oracle_p.add_argument("config")
    oracle_p.add_argument("-n", type=int, required=True)
    oracle_p.add_argument("-o", "--output", required=True)
    oracle_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    oracle_p.set_defaults(func=_cmd_oracle_sample)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
