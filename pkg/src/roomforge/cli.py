"""Command-line entry point.

Subcommands mirror the pipeline stages plus ``run`` (all stages) and
``validate-config``.  Exit codes: 0 success, 2 configuration error, 3 stage
failure.
"""

from __future__ import annotations

import argparse
import sys

from .pipeline import ConfigError, STAGES, StageError, load_config, run_pipeline, run_stage

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roomforge",
        description="Generate 3D mesh assets from prompts and place them in floor plans.",
    )
    parser.add_argument("--config", required=True, help="pipeline TOML configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the global seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, help=f"run the {stage} stage")
    sub.add_parser("run", help="run all stages in order")
    sub.add_parser("validate-config", help="check the configuration and referenced files")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, output=args.out)
        if args.command == "validate-config":
            config.validate_files()
            print(f"config ok: seed={config.seed} output={config.output_dir}")
            return EXIT_OK
        config.validate_files()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run":
            manifest = run_pipeline(config)
            for stage in STAGES:
                entry = manifest.get(stage) or {}
                status = entry.get("status", "?")
                cached = " (cached)" if entry.get("cached") else ""
                note = f" - {entry['note']}" if "note" in entry else ""
                print(f"{stage:10s} {status}{cached} {entry.get('wall_s', 0):8.1f}s{note}")
        else:
            entry = run_stage(args.command, config)
            cached = " (cached)" if entry.get("cached") else ""
            print(f"{args.command}: {entry['status']}{cached} in {entry.get('wall_s', 0):.1f}s")
    except StageError as e:
        print(f"stage error: {e}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
