"""Command-line entry point: ``qbundle run | list-checks | validate``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from ..errors import ParseError, ValidationError
from ..linalg import Tolerance
from .checks import REGISTRY
from .report import FORMATS, emit_report, run_suite
from .scenario import parse_scenario, validate

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbundle", description="Run verification scenarios.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and emit a report")
    run.add_argument("scenario")
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--format", choices=FORMATS, default="json-lines")
    run.add_argument("--seed", type=int)
    run.add_argument("--tol", type=float)
    run.add_argument("--steps", type=int)

    sub.add_parser("list-checks", help="print check names with their equation tags")

    val = sub.add_parser("validate", help="parse and validate a scenario")
    val.add_argument("scenario")
    return p


def _load(path: str):
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _overrides(spec, args):
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.tol is not None:
        try:
            spec = replace(spec, tolerances=Tolerance(args.tol, spec.tolerances.rel))
        except ValueError as exc:
            raise ValidationError(str(exc), "--tol") from None
    if args.steps is not None:
        spec = replace(spec, time=replace(spec.time, steps=args.steps))
    validate(spec)
    return spec


def _describe(exc) -> str:
    return f"{type(exc).__name__}: {exc}"


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    if args.command == "list-checks":
        for c in REGISTRY:
            print(f"{c.name}\t{c.equation}\t{c.suite}\t{c.summary}")
        return EXIT_OK

    try:
        spec = _load(args.scenario)
        if args.command == "validate":
            print(f"ok {spec.digest()}")
            return EXIT_OK
        spec = _overrides(spec, args)
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError) as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_USAGE

    report = run_suite(spec, with_series=args.format == "csv-series")
    text = emit_report(report, args.format)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
