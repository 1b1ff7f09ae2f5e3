"""Command-line entry point.

``scatterzo run --config configs/cbf.json`` runs the whole pipeline; the
stage subcommands ``gen``, ``scatter``, ``train``, ``extract``, ``eval`` and
``plot`` run one step each against the same output directory.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import experiment
from .experiment import ConfigError, ExperimentConfig, StageError

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3
COMMANDS = ("run", "gen", "scatter", "train", "extract", "eval", "plot")


def build_parser():
    parser = argparse.ArgumentParser(prog="scatterzo", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config JSON (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--print-config", action="store_true",
                       help="print the fully resolved config and exit")
    return parser


def resolve_config(args):
    config = experiment.load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        config = dataclasses.replace(config, master_seed=args.seed)
    if args.out is not None:
        config = dataclasses.replace(config, output_dir=args.out)
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        if args.command == "run":
            report = experiment.run_experiment(config)
            print(experiment.format_report(report), end="")
        elif args.command == "plot":
            from .plots import write_plots
            ws = experiment.Workspace(config)
            try:
                paths = write_plots(ws.root, ws.path("plots"), config.dataset)
            except (FileNotFoundError, ValueError) as exc:
                raise StageError("plot", str(exc)) from exc
            for path in paths:
                print(path)
        else:
            ws = experiment.Workspace(config)
            result = experiment.STAGES[args.command](ws)
            if args.command == "eval":
                print(experiment.format_report(result), end="")
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
