"""Run every pipeline stage in order into one output directory.

    python scripts/run_pipeline.py --out run [--config cfg.json] [--seed N]
"""

import argparse
import sys

from dualarm.cli import main

STAGES = ["gen-data", "place-sensors", "train-vae", "build-graph", "bench"]


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="run")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    common = ["--out", args.out]
    if args.config:
        common += ["--config", args.config]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    if args.verbose:
        common.append("-v")
    for stage in STAGES:
        code = main([stage, *common])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run())
