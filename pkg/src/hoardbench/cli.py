"""Command-line interface.

    hoardbench run --config experiment.json [--seeds a..b] [--out DIR] [--jobs N]
    hoardbench report --in DIR
    hoardbench validate --config experiment.json

Exit codes: 0 on success, 1 on a configuration error, 2 when at least one
run cell failed at runtime.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .core.state import ConfigurationError
from .harness import (
    load_result_set,
    parse_config,
    resolved_document,
    run_grid,
    write_report,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoardbench")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a config's ablation grid")
    run.add_argument("--config", required=True, help="path to a JSON experiment config")
    run.add_argument("--seeds", default=None, help="override seed range, e.g. 0..31")
    run.add_argument("--out", default=None, help="override output directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    report = sub.add_parser("report", help="rebuild reports from a results directory")
    report.add_argument("--in", dest="input_dir", required=True)

    validate = sub.add_parser("validate", help="validate a config and echo it resolved")
    validate.add_argument("--config", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            with open(args.config) as fh:
                config = parse_config(fh.read())
            print(json.dumps(resolved_document(config), indent=2, sort_keys=True))
            return 0

        if args.command == "run":
            with open(args.config) as fh:
                config = parse_config(fh.read())
            if args.seeds is not None:
                document = resolved_document(config)
                document["seeds"] = args.seeds
                config = parse_config(json.dumps(document))
            if args.out is not None:
                config = dataclasses.replace(config, output_dir=args.out)
            result = run_grid(config, jobs=max(1, args.jobs))
            out = write_report(result, config.output_dir)
            failed = sum(1 for c in result.cells if c.record.status == "failed")
            print(f"wrote {len(result.cells)} run cells to {out} ({failed} failed)")
            return 2 if failed else 0

        if args.command == "report":
            result = load_result_set(args.input_dir)
            write_report(result, args.input_dir)
            print(f"rebuilt reports in {args.input_dir}")
            return 2 if result.any_failed() else 0
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
