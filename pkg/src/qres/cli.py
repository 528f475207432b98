"""Command-line interface: ``qres <subcommand>``.

Exit codes: 0 success, 2 invalid input (parse or validation errors, missing
files), 3 numerical failure (insufficient data, non-convergence).
Diagnostics go to stderr; data goes to the output files (``weak`` prints its
JSON record to stdout).
"""

import argparse
import json
import math
import sys

from . import edm
from .config import parse_config
from .errors import (
    DivergedError,
    InsufficientData,
    MissingFieldSign,
    NonConvergence,
    OutOfRange,
    ParseError,
    ValidationError,
)
from .scan import scan, thread_count
from .weak import rabi_weak_value_im, ramsey_weak_value, stay_probability

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

EPILOG = "exit codes: 0 success, 2 invalid config or input, 3 insufficient data or non-convergence"


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_scan(args):
    config = parse_config(_read(args.config), args.overrides, kind="scan")
    result = scan(config, threads=thread_count(args.threads))
    with open(args.out, "w", encoding="ascii", newline="\n") as fh:
        result.to_csv(fh)
    print(f"wrote {len(result)} rows to {args.out}", file=sys.stderr)
    return EXIT_OK


def weak_record(phi, area, mode):
    record = {"mode": mode, "phi": phi, "pulse_area": area, "stay_probability": stay_probability(phi, area)}
    try:
        im_left = rabi_weak_value_im(phi, area)
        record.update(diverged=False, im_sigma2_left=im_left, im_sigma2_right=-im_left)
        if mode == "ramsey":
            value = ramsey_weak_value(phi, area)
            record["sigma3_weak"] = {"re": value.real, "im": value.imag}
    except DivergedError:
        record.update(diverged=True, im_sigma2_left=None, im_sigma2_right=None)
        if mode == "ramsey":
            record["sigma3_weak"] = None
    return record


def cmd_weak(args):
    if not (math.isfinite(args.phi) and math.isfinite(args.area)):
        raise ValidationError([("phi/area", "must be finite")])
    print(json.dumps(weak_record(args.phi, args.area, args.mode), sort_keys=True))
    return EXIT_OK


def _edm_config(args):
    overrides = list(args.overrides)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return parse_config(_read(args.config), overrides, kind="edm")


def cmd_edm_simulate(args):
    config = _edm_config(args)
    records = edm.simulate(config, threads=thread_count(args.threads))
    _write(args.out, edm.cycles_to_text(records))
    print(f"wrote {len(records)} cycles to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_edm_analyze(args):
    config = _edm_config(args)
    with open(args.cycles, encoding="utf-8", newline="") as fh:
        records = edm.read_cycles(fh)
    result = edm.analyze(records, config)
    _write(args.out, edm.analysis_to_json(result))
    print(
        f"edm estimate {result['edm_estimate_ecm']:.4g} +- {result['sigma_d_ecm']:.3g} e*cm",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_verify(args):
    from .verify import format_table, run_checks

    results = run_checks(args.filter)
    if not results:
        print(f"no checks match {args.filter!r}", file=sys.stderr)
        return EXIT_INVALID
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="qres", description="Two-level resonance and weak-value toolkit.", epilog=EPILOG)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="sweep the drive frequency", epilog=EPILOG)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("overrides", nargs="*", metavar="key=value")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("weak", help="print the weak values at one detuning phase", epilog=EPILOG)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--area", type=float, required=True)
    p.add_argument("--mode", choices=("rabi", "ramsey"), default="rabi")
    p.set_defaults(func=cmd_weak)

    p = sub.add_parser("edm-simulate", help="simulate counting cycles", epilog=EPILOG)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("overrides", nargs="*", metavar="key=value")
    p.set_defaults(func=cmd_edm_simulate)

    p = sub.add_parser("edm-analyze", help="fit cycles and estimate the EDM", epilog=EPILOG)
    p.add_argument("--cycles", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("overrides", nargs="*", metavar="key=value")
    p.set_defaults(func=cmd_edm_analyze)

    p = sub.add_parser("verify", help="run the acceptance checks", epilog=EPILOG)
    p.add_argument("--filter", default=None, help="only run checks whose name contains this text")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"qres: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"qres: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InsufficientData, NonConvergence, MissingFieldSign, OutOfRange) as exc:
        print(f"qres: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
