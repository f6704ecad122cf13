"""Command-line entry point: ``adaseq run`` and ``adaseq presets``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from adaseq import config as cfgmod
from adaseq.config import ConfigError
from adaseq.core.types import NumericalError
from adaseq.policy import PolicyBoundsError
from adaseq.scenarios import CsvError, PoolExhausted

SEED_ENV = "ADASEQ_SEED"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("adaseq")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adaseq", description="Adaptive sample-size experiments on drifting problems")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file or preset")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="TOML config file")
    src.add_argument("--preset", help="built-in preset name (see 'adaseq presets')")
    run.add_argument("--seed", type=int, help=f"base seed (overrides the config and ${SEED_ENV})")
    run.add_argument("--runs", type=int, help="number of seeded runs")
    run.add_argument("--out", type=Path, required=True, help="results directory")
    run.add_argument("--force", action="store_true", help="overwrite a non-empty results directory")
    run.add_argument("--jobs", type=int, default=1, help="worker processes across seeds")

    sub.add_parser("presets", help="list built-in presets")
    return ap


def _resolve(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.preset(args.preset)
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: not an integer: {os.environ[SEED_ENV]!r}") from None
    if seed is not None:
        cfg.run.seed = seed
    if args.runs is not None:
        cfg.run.runs = args.runs
    if args.jobs < 1:
        raise ConfigError("--jobs: must be >= 1")
    return cfgmod.validate(cfg)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        for name in cfgmod.PRESETS:
            print(f"{name:24s} {cfgmod.PRESET_NOTES[name]}")
        return EXIT_OK

    from adaseq.experiment import run_experiment

    try:
        cfg = _resolve(args)
        summary = run_experiment(cfg, args.out, force=args.force, jobs=args.jobs)
    except (ConfigError, FileExistsError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, PolicyBoundsError, PoolExhausted, CsvError, OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for approach, h in summary["headline"].items():
        parts = [f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in h.items()
                 if not isinstance(v, list)]
        print(f"{approach}: " + " ".join(parts))
    print(f"wrote {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
