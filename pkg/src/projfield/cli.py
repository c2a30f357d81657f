"""Command line entry point: ``projfield run | sweep | list-experiments``.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage error, 3 resource cap.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments
from .errors import ResourceError, ValidationError

log = logging.getLogger("projfield")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3

# flag name -> config parameter
FLAG_PARAMS = {"d": "d", "i": "i", "j": "j", "n": "n", "seed": "seed", "geometry": "geometry",
               "length": "length", "quad_order": "quad_order", "tolerance": "tolerance"}


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="projfield", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list-experiments", help="print the available experiment kinds")

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", help="JSON file with one experiment record")
    run.add_argument("--kind", help="experiment kind (overrides the file)")
    run.add_argument("-d", type=int)
    run.add_argument("-i", type=int)
    run.add_argument("-j", type=int)
    run.add_argument("-n", type=int, help="Monte-Carlo sample count")
    run.add_argument("--seed", type=int)
    run.add_argument("--geometry", choices=["circle", "line"])
    run.add_argument("--length", type=float, help="circle circumference")
    run.add_argument("--quad-order", dest="quad_order", type=int)
    run.add_argument("--tolerance", type=float)
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="extra parameter, value parsed as JSON when possible")
    run.add_argument("-o", "--output", help="write the JSON report here")
    run.add_argument("--csv", help="write the check records as CSV")
    run.add_argument("--table-csv", help="write (h, error) tables as CSV")

    sw = sub.add_parser("sweep", help="run a list of experiments")
    sw.add_argument("config", help="JSON file with a list of records")
    sw.add_argument("-o", "--output", help="write the aggregate JSON report here")
    sw.add_argument("--csv", help="write the check records as CSV")
    sw.add_argument("--table-csv", help="write (h, error) tables as CSV")
    return parser


def _config_from_args(args) -> experiments.ExperimentConfig:
    if args.config:
        configs = experiments.load_configs(args.config)
        if len(configs) != 1:
            raise ValidationError("config: 'run' takes exactly one record; use 'sweep' for lists")
        config = configs[0]
    elif args.kind:
        config = experiments.ExperimentConfig(args.kind)
    else:
        raise ValidationError("kind: give --kind or --config")
    if args.kind:
        config.kind = args.kind
    for flag, key in FLAG_PARAMS.items():
        value = getattr(args, flag)
        if value is not None:
            config.params[key] = value
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValidationError(f"set: expected KEY=VALUE, got {item!r}")
        config.params[key] = _parse_value(raw)
    if args.output:
        config.output = args.output
    return config


def _summarize(report: experiments.Report):
    for c in report.checks:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"[{status}] {c['name']}: {c['residual']:.3e} {c['relation']} {c['tolerance']:.3e}")
    print("overall:", "PASS" if report.passed else "FAIL")


def _write_extras(report, args):
    if args.csv:
        experiments.write_checks_csv(report, args.csv)
    if args.table_csv:
        experiments.write_tables_csv(report, args.table_csv)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-experiments":
            for item in experiments.describe():
                print(f"{item['kind']:<24} {item['description']}")
            return EXIT_PASS
        if args.command == "run":
            report = experiments.run(_config_from_args(args))
        else:
            report = experiments.sweep(experiments.load_configs(args.config))
            if args.output:
                with open(args.output, "w") as fh:
                    fh.write(report.to_json())
        _write_extras(report, args)
    except ValidationError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    _summarize(report)
    if not report.passed:
        print("failed checks: " + "; ".join(report.failures()), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
