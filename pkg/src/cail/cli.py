"""Command line entry point: ``cail run | check | oracle | summarize``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cail", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True, help="flat key = value config file")
    run.add_argument("--out", help="output directory (overrides run.output_dir)")
    run.add_argument("--method", help="override run.method")
    run.add_argument("--seeds", help="override run.seeds, e.g. 0,1,2")

    check = sub.add_parser("check", help="run the invariant suite")
    check.add_argument("--skip-slow", action="store_true",
                       help="skip the Monte Carlo cross-check")

    sub.add_parser("oracle", help="compare fast paths with the brute-force oracles")

    summ = sub.add_parser("summarize", help="summarize run_<seed>.csv files in a directory")
    summ.add_argument("dir")
    return p


def _run(args) -> int:
    from .harness import ConfigError, parse_config, run_experiment

    try:
        cfg = parse_config(Path(args.config).read_text())
        if args.method:
            cfg = replace(cfg, method=args.method)
        if args.seeds:
            cfg = replace(cfg, seeds=tuple(int(s) for s in args.seeds.split(",") if s.strip()))
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output_dir)
    try:
        metrics = run_experiment(cfg, out)
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print((out / "summary.txt").read_text(), end="")
    for run in metrics.failed:
        reason = run.error or (run.report.aborted if run.report else "unknown")
        print(f"seed {run.seed} failed: {reason.splitlines()[0]}", file=sys.stderr)
    return EXIT_RUNTIME if metrics.failed else EXIT_OK


def _report(results) -> int:
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    if args.command in ("check", "oracle"):
        from . import checks

        try:
            if args.command == "oracle":
                results = checks.oracle_suite()
            else:
                results = checks.invariant_suite(monte_carlo=not args.skip_slow)
        except Exception as exc:
            print(f"runtime failure: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return _report(results)
    if args.command == "summarize":
        from .harness import summarize_dir

        try:
            print(summarize_dir(args.dir), end="")
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
