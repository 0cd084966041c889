"""Command line entry point: ``kinetic-chain <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys

from .harness import DEFAULT_SEED, KINDS, PRESETS, ConfigError, RunConfig, emit_report, run


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinetic-chain", description="Kinetic limit and stable-law experiments.")
    ap.add_argument("kind", choices=KINDS, help="experiment to run")
    ap.add_argument("--config", help="INI file with [run], [model], [functionals], [kinetic], [semigroup], [lattice]")
    ap.add_argument("--seed", type=int, help=f"run seed (mandatory unless given in the config; default {DEFAULT_SEED} without a config)")
    ap.add_argument("--preset", choices=sorted(PRESETS), default="quick")
    ap.add_argument("--out", default="runs", help="output directory")
    ap.add_argument("--only", type=int, nargs="*", help="restrict to these acceptance criteria")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    seed = args.seed
    if seed is None and args.config is None:
        seed = DEFAULT_SEED
    try:
        cfg = RunConfig.build(args.kind, seed, args.preset, args.out, path=args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    record = run(cfg, criteria=args.only or None)
    print(emit_report([record]))
    return 1 if record.failed else 0


if __name__ == "__main__":
    sys.exit(main())
