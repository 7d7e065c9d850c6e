"""Command-line entry point: ``hcnstream --config exp.yaml --out-dir results``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from hcnstream.experiment import MODES, ConfigError, ExperimentConfig, run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hcnstream", description="Seeded HCN video streaming experiments.")
    p.add_argument("--config", help="YAML or JSON experiment config (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="master seed; topology k uses seed + k")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--eta-fixed", type=float, help="partition for the fixed-eta modes")
    p.add_argument("--out-dir", required=True, help="directory for the CSV outputs")
    p.add_argument("--max-iters", type=int, help="solver iteration limit")
    p.add_argument("--oracle", action="store_true", help="also compute the brute-force optimum (tiny instances)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.mode is not None:
            over["mode"] = args.mode
        if args.eta_fixed is not None:
            over["eta_fixed"] = args.eta_fixed
        if args.max_iters is not None:
            over["solver"] = {**cfg.solver, "max_iters": args.max_iters}
        if args.oracle:
            over["oracle"] = True
        cfg = dataclasses.replace(cfg, **over)
        cfg.validate()
        paths = run_experiment(cfg, args.out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
