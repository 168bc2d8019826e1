"""``pfc-lab <experiment> --config FILE [--seed N] [--out DIR] [--plot] [--threads K]``.

Exit status: 0 success, 1 invalid configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback

from .experiments import CONFIG_SCHEMA, EXPERIMENTS, ConfigError, load_config, merge_cli, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfc-lab", description=__doc__.splitlines()[0])
    p.add_argument("experiment", nargs="?", choices=EXPERIMENTS, metavar="experiment",
                   help="one of: " + ", ".join(EXPERIMENTS))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="master RNG seed (overrides the file)")
    p.add_argument("--out", help="output directory (overrides the file)")
    p.add_argument("--plot", action="store_true", default=None, help="also write SVG charts")
    p.add_argument("--threads", type=int, help="worker processes for independent sub-runs")
    p.add_argument("--schema", action="store_true", help="print the config JSON schema and exit")
    p.add_argument("--traceback", action="store_true", help="show tracebacks on failure")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.schema:
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return 0
    if args.experiment is None:
        parser.print_usage(sys.stderr)
        print("pfc-lab: error: an experiment is required", file=sys.stderr)
        return 1
    try:
        raw = load_config(args.config) if args.config else {}
        raw = merge_cli(raw, args.experiment, args.seed, args.out, args.plot, args.threads)
        manifest = run(raw)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted; partial outputs removed", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit code 2
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.traceback:
            traceback.print_exc()
        return 2
    n = len(manifest["files"])
    print(f"{raw['experiment']}: wrote {n} file(s) to {raw.get('output_dir', 'results')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
