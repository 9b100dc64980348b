"""Command line driver.

    rbffd run --problem tp1 --out results/tp1
    rbffd run -c tp5.cfg --set indicator=eps0 --set max_interior=2000
    rbffd indicator-compare --problem "tp5@alpha=1/(10*pi)" --out results/cmp
    rbffd stencil-stats --problem tp1 --max-interior 3000
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from .driver import RunError, indicator_compare, load_config, run


def _overrides(args) -> dict:
    ov = {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        ov[key.strip()] = val
    for key in ("problem", "indicator", "kernel"):
        if getattr(args, key, None) is not None:
            ov[key] = getattr(args, key)
    if args.out is not None:
        ov["output_dir"] = args.out
    for key in ("max_steps", "max_interior", "h0", "grid_step"):
        if getattr(args, key, None) is not None:
            ov[key] = str(getattr(args, key))
    if getattr(args, "no_grid", False):
        ov["compute_eg"] = "false"
    return ov


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--problem", help="tp1, tp2, tp3@omega=<val>, tp4, tp5@alpha=<val>, tp6a, tp6b")
    p.add_argument("--indicator", choices=("eps0", "eps1"))
    p.add_argument("--kernel", choices=("phs", "gaussian"))
    p.add_argument("--max-steps", type=int)
    p.add_argument("--max-interior", type=int)
    p.add_argument("--h0", type=float)
    p.add_argument("--grid-step", type=float)
    p.add_argument("--no-grid", action="store_true", help="skip the grid error E_g")
    p.add_argument("-o", "--out", help="output directory for CSV artifacts")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbffd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="adaptive solve/refine loop"))
    _common(sub.add_parser("indicator-compare", help="same run with eps0 and eps1"))
    _common(sub.add_parser("stencil-stats", help="uniformity measures per refinement step"))
    return parser


def _print_errors(reports) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["step", "n_interior", "e_c", "e_g"])
    for r in reports:
        w.writerow([r.step, r.n_interior, f"{r.e_c:.6e}", f"{r.e_g:.6e}"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config, _overrides(args))
    except (OSError, KeyError, ValueError) as exc:
        print(f"rbffd: stage 'config': {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            _print_errors(run(config))
        elif args.command == "indicator-compare":
            res = indicator_compare(config)
            w = csv.writer(sys.stdout, lineterminator="\n")
            w.writerow(["indicator", "step", "n_interior", "e_c", "e_g"])
            for kind, reps in res.items():
                for r in reps:
                    w.writerow([kind, r.step, r.n_interior, f"{r.e_c:.6e}", f"{r.e_g:.6e}"])
        else:
            w = csv.writer(sys.stdout, lineterminator="\n")
            w.writerow(["step", "n_interior", "v_max", "v_aver", "c_max", "c_aver"])

            def emit(r):
                w.writerow([r.step, r.n_interior, f"{r.v_max:.6f}", f"{r.v_aver:.6f}",
                            f"{r.c_max:.6f}", f"{r.c_aver:.6f}"])
                sys.stdout.flush()

            run(config, on_step=emit)
    except RunError as exc:
        print(f"rbffd: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
