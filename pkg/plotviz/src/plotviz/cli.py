"""Command-line front end for the figure renderers."""

from __future__ import annotations

import argparse
import sys

from .plots import (
    MissingColumnError,
    PlotSpec,
    plot_convergence,
    plot_errors_in_time,
    read_csv_columns,
)


def detect_kind(path: str) -> str:
    data = read_csv_columns(path)
    return "convergence" if "eps" in data else "errors"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotviz", description="Render qrwave CSV outputs to figures")
    parser.add_argument("--input", required=True, help="sweep or error CSV")
    parser.add_argument("--output", required=True, help="image file to write")
    parser.add_argument("--metric", default="l2",
                        choices=["l2", "grad", "dt_plus_int"],
                        help="metric for convergence plots")
    parser.add_argument("--overlay-bounds", action="store_true",
                        help="draw the theoretical bound shapes")
    parser.add_argument("--kind", choices=["convergence", "errors", "auto"],
                        default="auto")
    parser.add_argument("--C1", type=float, default=1.0)
    parser.add_argument("--T", type=float, default=0.5)
    parser.add_argument("--eps", type=float, default=None,
                        help="noise level (error-history bound overlay)")
    parser.add_argument("--gamma", type=float, default=None,
                        help="auxiliary value (error-history bound overlay)")
    args = parser.parse_args(argv)

    spec = PlotSpec(input_path=args.input, output_path=args.output,
                    metric=args.metric, overlay_bounds=args.overlay_bounds,
                    C1=args.C1, T=args.T, eps=args.eps, gamma=args.gamma)
    try:
        kind = detect_kind(args.input) if args.kind == "auto" else args.kind
        if kind == "convergence":
            plot_convergence(spec)
        else:
            plot_errors_in_time(spec)
    except MissingColumnError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
