"""Command-line front end: ``dualarm <stage> [--config PATH] [--seed N] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .pipeline import STAGES, StageError, load_config, run_stage


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (default: the shipped one)")
    common.add_argument("--seed", type=int, help="master seed for every stage")
    common.add_argument("--out", default="run", help="output directory (default: ./run)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dualarm", description="Latent-roadmap dual-arm planning pipeline.")
    sub = p.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        sp = sub.add_parser(stage, parents=[common])
        if stage == "gen-data":
            sp.add_argument("--n-samples", type=positive_int)
        if stage == "train-vae":
            sp.add_argument("--epochs", type=positive_int)
        if stage == "build-graph":
            sp.add_argument("--k", type=positive_int)
            sp.add_argument("--n-synthetic", type=int)
        if stage in ("run-episodes", "bench", "export-plots"):
            sp.add_argument("--d-safe", type=positive_float)
            sp.add_argument("--mode", choices=("A", "B"))
            sp.add_argument("--workers", type=positive_int)
        if stage in ("run-episodes", "bench"):
            sp.add_argument("--episodes", type=positive_int)
        if stage == "export-plots":
            sp.add_argument("--episode-index", type=int, default=0)
    return p


def apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "n_samples", None) is not None:
        cfg.dataset = replace(cfg.dataset, n_samples=args.n_samples)
    if getattr(args, "epochs", None) is not None:
        cfg.vae = replace(cfg.vae, epochs=args.epochs)
    if getattr(args, "k", None) is not None:
        cfg.graph = replace(cfg.graph, k=args.k)
    if getattr(args, "n_synthetic", None) is not None:
        if args.n_synthetic < 0:
            raise SystemExit("dualarm: --n-synthetic must be non-negative")
        cfg.graph = replace(cfg.graph, n_synthetic=args.n_synthetic)
    scen = cfg.episodes.scenario
    if getattr(args, "d_safe", None) is not None:
        scen = replace(scen, d_safe=args.d_safe)
    if getattr(args, "mode", None) is not None:
        scen = replace(scen, mode=args.mode)
    ep = replace(cfg.episodes, scenario=scen)
    if getattr(args, "episodes", None) is not None:
        ep = replace(ep, episodes=args.episodes)
    if getattr(args, "workers", None) is not None:
        ep = replace(ep, workers=args.workers)
    cfg.episodes = ep
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"dualarm: bad config: {exc}", file=sys.stderr)
        return 2
    kw = {"index": args.episode_index} if args.stage == "export-plots" else {}
    try:
        written = run_stage(args.stage, cfg, args.out, args.config, **kw)
    except StageError as exc:
        print(f"dualarm: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report any stage failure as a clean exit status
        print(f"dualarm: {args.stage} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"{args.stage}: wrote {len(written)} file(s) under {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
