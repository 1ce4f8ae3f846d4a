"""rsr-plot: render sweep CSVs into figure files (PNG or SVG by extension)."""

from __future__ import annotations

import argparse
import sys

from .errors import PlotError
from .render import PlotSpec, render
from .schema import KIND_COLUMNS


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="rsr-plot",
        description="Render a sweep records CSV into a figure.",
    )
    p.add_argument("--csv", required=True, help="records CSV from `rsr sweep`")
    p.add_argument("--kind", required=True, choices=sorted(KIND_COLUMNS))
    p.add_argument("--out", required=True, help="output image (.png or .svg)")
    p.add_argument("--group-by", default="method")
    p.add_argument("--log-y", action="store_true")
    args = p.parse_args(argv)
    try:
        result = render(
            PlotSpec(
                input_csv=args.csv, kind=args.kind, out_path=args.out,
                group_by=args.group_by, log_y=args.log_y,
            )
        )
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
