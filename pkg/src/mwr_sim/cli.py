"""Command line entry point ``mwr-sim``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .channel import InvalidConfig
from .experiments import (VALIDATE_COLUMNS, ConfigError, ExperimentSpec, load_config, oracle_tuple,
                          run_fig1, run_fig2, run_single, run_validate, write_cdf, write_rows)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3


def build_parser():
    p = argparse.ArgumentParser(prog="mwr-sim", description=(
        "Multi-way massive MIMO relay simulator: ZF/MR sum spectral efficiency sweeps, "
        "user-drop CDFs and random-matrix oracle validation."))
    p.add_argument("command", choices=["fig1", "fig2", "validate", "single"])
    p.add_argument("--config", help="flat 'key = value' file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    p.add_argument("--out", help="output CSV path ('-' for stdout)")
    p.add_argument("--mode", choices=["zf", "mr", "both"])
    p.add_argument("--threads", type=int)
    p.add_argument("--drops", type=int, help="fig2: number of user drops")
    g = p.add_argument_group("single", "replay one result row")
    g.add_argument("--experiment", choices=["fig1", "fig2"])
    g.add_argument("--method", choices=["closed_form", "monte_carlo"])
    g.add_argument("-M", type=int)
    g.add_argument("-K", type=int)
    g.add_argument("--case", type=int)
    g.add_argument("--drop", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def make_spec(args) -> ExperimentSpec:
    values = load_config(args.config) if args.config else {}
    for key in ("seed", "trials", "out", "mode", "threads", "drops", "experiment", "method",
                "M", "K", "case", "drop"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    values.pop("name", None)
    return ExperimentSpec.for_command(args.command, **values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = make_spec(args)
        if args.command == "validate":
            results = run_validate(spec, raise_on_failure=False)
            write_rows([oracle_tuple(r) for r in results], spec.out, VALIDATE_COLUMNS)
            failed = [r for r in results if r.kind == "exact" and not r.passed]
            for r in results:
                print(r.line(), file=sys.stderr)
            if failed:
                print("oracle failure: " + ", ".join(r.name for r in failed), file=sys.stderr)
                return EXIT_ORACLE
            return EXIT_OK
        if args.command == "fig1":
            rows = run_fig1(spec)
        elif args.command == "fig2":
            rows = run_fig2(spec)
            if spec.out != "-":
                out = Path(spec.out)
                write_cdf(rows, out.with_name(out.stem + "_cdf.csv"))
        else:
            rows = [run_single(spec)]
        write_rows(rows, spec.out)
    except (ConfigError, InvalidConfig, OSError) as exc:
        print(f"mwr-sim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
