"""Command line entry point: ``corpuskit <stage> --config PATH``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import STAGES, ConfigError, PipelineConfig, validate_config
from .pipeline import USAGE_ERROR, run_pipeline, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corpuskit", description="Multilingual corpus construction pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("pipeline", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON pipeline config")
        if name != "validate":
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--workers", type=int, default=None)
    return parser


def _print_result(res) -> None:
    line = {"stage": res.stage, "status": res.status}
    if res.message:
        line["message"] = res.message
    print(json.dumps(line, ensure_ascii=False))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = PipelineConfig.load(args.config)
    except (OSError, ValueError, ConfigError) as exc:
        print(f"config: cannot read {args.config}: {exc}", file=sys.stderr)
        return USAGE_ERROR
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "workers", None) is not None:
        config.workers = args.workers

    if args.command == "validate":
        stages = None
    elif args.command == "pipeline":
        stages = [s for s in STAGES if config.enabled(s)]
    else:
        stages = [args.command]
    diags = validate_config(config, stages)
    for d in diags:
        print(str(d), file=sys.stderr)
    if diags:
        return USAGE_ERROR
    if args.command == "validate":
        return 0

    if args.command == "pipeline":
        results = run_pipeline(config)
    else:
        results = [run_stage(args.command, config)]
    for res in results:
        _print_result(res)
        if res.status == USAGE_ERROR:
            print(res.message, file=sys.stderr)
    return max((r.status for r in results), default=0)


if __name__ == "__main__":
    sys.exit(main())
