"""Command line entry point: ``lacunary run ...``."""
from __future__ import annotations

import argparse
import logging
import sys

from ..exceptional import Knobs
from .runner import INVARIANTS, PRESETS, ExperimentSpec, FamilySpec, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lacunary", description="Lacunary spherical maximal experiments")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment suite and write report.csv")
    r.add_argument("--spec", help="JSON experiment spec")
    r.add_argument("--preset", choices=sorted(PRESETS), help="built-in suite")
    r.add_argument("--grid", type=int, help="cells per side of the unit square")
    r.add_argument("--alpha", type=float, action="append", help="level (repeatable)")
    r.add_argument("--family", action="append", help="test family name (repeatable)")
    r.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
    r.add_argument("--kmin", type=int)
    r.add_argument("--kmax", type=int)
    r.add_argument("--dump-exceptional", action="store_true", help="write PGM bitmaps per row")
    r.add_argument("--paper-constants", action="store_true", help="use the literal constants")
    r.add_argument("--out", help="output directory")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def spec_from_args(args) -> ExperimentSpec:
    if args.spec:
        spec = ExperimentSpec.load(args.spec)
    elif args.preset:
        spec = PRESETS[args.preset]()
    else:
        spec = ExperimentSpec()
    if args.family:
        spec.families = [FamilySpec(name) for name in args.family]
    if args.grid:
        spec.grid = args.grid
    if args.alpha:
        spec.alphas = args.alpha
    if args.seed:
        spec.seeds = args.seed
    if args.kmin is not None:
        spec.kmin = args.kmin
    if args.kmax is not None:
        spec.kmax = args.kmax
    if args.dump_exceptional:
        spec.dump_exceptional = True
    if args.paper_constants:
        spec.knobs = Knobs.literal()
    if args.out:
        spec.out = args.out
    return spec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    spec = spec_from_args(args)
    report = run(spec)
    bad = [r["row"] for r in report.rows if not all(r.get(c) is True for c in INVARIANTS)]
    print(f"{len(report.rows)} rows -> {report.path}")
    if not report.ok:
        print("invariant failures in rows: " + ", ".join(bad), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
