"""bpg-plots: figures from bpg-lab result CSVs.

Usage:
    bpg-plots grad-compare RESULTS.csv -o FIG.svg
    bpg-plots curves RESULTS.csv -o FIG.svg [--logy]
"""

from __future__ import annotations

import argparse
import sys

from bpgplots.csvio import SchemaError
from bpgplots.render import plot_grad_compare, plot_learning_curves


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bpg-plots", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    gc = subs.add_parser("grad-compare", help="MSE and angular-error panels vs sample size")
    gc.add_argument("csv")
    gc.add_argument("-o", "--out", required=True, help="output figure (.svg or .png)")

    cv = subs.add_parser("curves", help="learning curves with standard-error bands")
    cv.add_argument("csv")
    cv.add_argument("-o", "--out", required=True)
    cv.add_argument("--logy", action="store_true", help="logarithmic metric axis")

    args = parser.parse_args(argv)
    try:
        if args.command == "grad-compare":
            plot_grad_compare(args.csv, args.out)
        else:
            plot_learning_curves(args.csv, args.out, logy=args.logy)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
