"""Command-line entry points for the two renderers."""

from __future__ import annotations

import argparse
import sys

from .panels import PanelSpec, render_loss, render_panel


def main_panel(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rkhsconv-render-panel",
        description="Render input/output/target grid CSVs as one contour panel",
    )
    parser.add_argument("--spec", required=True, help="panel spec JSON path")
    args = parser.parse_args(argv)
    try:
        out = render_panel(PanelSpec.load(args.spec))
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


def main_loss(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rkhsconv-render-loss",
        description="Render a training loss trace CSV as a log-scale curve",
    )
    parser.add_argument("--trace", required=True, help="loss CSV path")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        out = render_loss(args.trace, args.out)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main_panel())
