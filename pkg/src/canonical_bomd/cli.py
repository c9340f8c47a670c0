"""Command-line entry point: ``canonical-bomd <command> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 a numerical-reliability
flag was raised (results are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from . import experiments
from .borndyn import ReliabilityWarning
from .config import PRESETS, ConfigError, load
from .results import write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_UNRELIABLE = 0, 2, 3

COMMANDS = {
    "density": lambda cfg, threads: experiments.run_density(cfg),
    "converge-density": lambda cfg, threads: experiments.run_converge_density(cfg),
    "correlate": experiments.run_correlate,
    "converge-correlation": experiments.run_converge_correlation,
    "weights": lambda cfg, threads: experiments.run_weights(cfg),
    "sample-langevin": lambda cfg, threads: experiments.run_sample_langevin(cfg),
    "diag-check": lambda cfg, threads: experiments.run_diag_check(cfg),
    "weyl-check": lambda cfg, threads: experiments.run_weyl_check(cfg),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="canonical-bomd", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON file with overrides of the preset")
    parser.add_argument("--preset", choices=sorted(PRESETS), default="paper")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--threads", type=int, default=1, help="worker cap for phase-space quadrature")
    parser.add_argument("--out", help="output directory (default: config 'out')")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config, args.preset)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ReliabilityWarning)
        try:
            outcome = COMMANDS[args.command](cfg, args.threads)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    flags = list(outcome.unreliable)
    flags += [str(w.message) for w in caught if issubclass(w.category, ReliabilityWarning)]

    out_dir = Path(cfg.out)
    digest = cfg.digest()
    for name, (header, rows) in outcome.tables.items():
        print(write_csv(out_dir / f"{name}.csv", header, rows, digest, args.command))
    for name, payload in outcome.summaries.items():
        print(write_json(out_dir / f"{name}.json", payload, digest, args.command))
    if flags:
        for msg in dict.fromkeys(flags):
            print(f"reliability flag: {msg}", file=sys.stderr)
        return EXIT_UNRELIABLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
