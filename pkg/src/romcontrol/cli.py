"""Command-line front end.

    romcontrol run --config configs/xyz_n9_validate.yaml
    romcontrol build-rom --config ... --out runs/x
    romcontrol simulate --config ...
    romcontrol optimize --config ... --seed-override 3
    romcontrol infoflow --config ... [--controls controls.npz]
    romcontrol export runs/x
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .errors import InvalidInputError, OptimizationError, ResourceError
from .pipeline import export_plot_data, run_stage

STAGES = ("run", "build-rom", "simulate", "optimize", "infoflow")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config (YAML)")
    p.add_argument("--out", default=None, help="artifact directory (default: $ROMCONTROL_OUT/<name>)")
    p.add_argument("--seed-override", type=int, default=None, help="replace the config seeds by this single seed")
    p.add_argument("--threads", type=int, default=None, help="worker threads for independent model evaluations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="romcontrol", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        _common(p)
        if name == "infoflow":
            p.add_argument("--controls", default=None, help="control sequence container to evaluate as well")
        if name == "run":
            p.add_argument("--no-export", action="store_true", help="skip writing plot data")
    p = sub.add_parser("export")
    p.add_argument("artifact_dir")
    p.add_argument("--out", default=None, help="destination (default: <artifact_dir>/plots)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "export":
            files = export_plot_data(args.artifact_dir, args.out)
            for f in files:
                print(f)
            return 0
        cfg = load_config(args.config)
        if args.seed_override is not None:
            cfg.seeds = [args.seed_override]
            cfg.optimizer.seed = args.seed_override
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("threads: must be a positive integer")
            cfg.threads = args.threads
        out = run_stage(cfg, args.command, args.out, getattr(args, "controls", None))
        if args.command == "run" and not args.no_export:
            export_plot_data(out)
        print(out)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, ResourceError, OptimizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
