"""Run every experiment command at one preset and collect the outputs.

    python scripts/run_experiments.py --preset desk --out results/desk --threads 4
"""

import argparse
import sys

from canonical_bomd import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--preset", default="desk", choices=["desk", "paper"])
    parser.add_argument("--config")
    parser.add_argument("--out", default="results")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--only", nargs="*", default=sorted(cli.COMMANDS))
    args = parser.parse_args()
    worst = 0
    for cmd in args.only:
        argv = [cmd, "--preset", args.preset, "--out", args.out, "--threads", str(args.threads)]
        if args.config:
            argv += ["--config", args.config]
        print(f"== {cmd}", flush=True)
        worst = max(worst, cli.main(argv))
    return worst


if __name__ == "__main__":
    sys.exit(main())
