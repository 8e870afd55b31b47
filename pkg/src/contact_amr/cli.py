"""``contact-amr`` command line."""

import argparse
import logging
import os
import sys
import traceback

from .amr import ContactNotConverged
from .bench import MODES, FitError, load_config, run
from .contact import PairingError
from .fem import ConfigError, MatrixError, SolverError
from .mesh import GeometryError, RefinementError
from .partition import PartitionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

SOLVER_ERRORS = (SolverError, MatrixError, PairingError, ContactNotConverged, FitError,
                 GeometryError, RefinementError, PartitionError)


def build_parser():
    ap = argparse.ArgumentParser(prog="contact-amr", description="Hertz contact AMR benchmarks")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one benchmark configuration")
    r.add_argument("config", help="flat key = value config file")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable)")
    r.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    sub.add_parser("modes", help="list run modes")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "modes":
        for name, text in MODES.items():
            print(f"{name:14s} {text}")
        return EXIT_OK
    try:
        cfg = load_config(args.config, args.overrides)
        os.makedirs(args.out, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"contact-amr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = run(cfg, args.out)
    except ConfigError as exc:
        print(f"contact-amr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        trace = os.path.join(args.out, "trace.txt")
        with open(trace, "w") as fh:
            traceback.print_exc(file=fh)
        print(f"contact-amr: solver failure: {exc} (trace in {trace})", file=sys.stderr)
        return EXIT_SOLVER
    sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
