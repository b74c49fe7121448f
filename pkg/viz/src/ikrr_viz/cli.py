"""Console entry points: plot-rate and plot-counts."""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, VizError, plot_counts, plot_rate


def main_rate(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-rate", description="Plot log-log risk vs n from ikrr outputs"
    )
    parser.add_argument("runs_csv")
    parser.add_argument("rate_json")
    parser.add_argument("-o", "--output", required=True)
    parser.add_argument("--theory-slope", type=float, default=None)
    parser.add_argument("--title", default="")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    spec = FigureSpec([args.runs_csv, args.rate_json], args.output,
                      args.theory_slope, args.title)
    try:
        plot_rate(spec)
    except (VizError, OSError) as exc:
        print(f"plot-rate: {exc}", file=sys.stderr)
        return 1
    return 0


def main_counts(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-counts", description="Plot count/prediction ratio vs lambda"
    )
    parser.add_argument("counts_csv")
    parser.add_argument("-o", "--output", required=True)
    parser.add_argument("--title", default="")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    spec = FigureSpec([args.counts_csv], args.output, None, args.title)
    try:
        plot_counts(spec)
    except (VizError, OSError) as exc:
        print(f"plot-counts: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main_rate())
