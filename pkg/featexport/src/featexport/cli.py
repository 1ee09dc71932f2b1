"""Command-line front end for the exporter."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ExportError
from .export import ExportConfig, export_features, export_probs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featexport",
        description="Export CNN feature grids (FGRD) and probability maps (PMAP)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="images -> FGRD feature grids")
    p.add_argument("--images", required=True, nargs="+", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--kind", choices=("synthetic", "real", "none"), default="real")
    p.add_argument("--weights", default="pretrained",
                   help="'pretrained', 'seeded', or a state-dict path")
    p.add_argument("--include-final-pool", action="store_true",
                   help="keep the fourth block's max-pool (stride 16 instead of 8)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("probs", help=".npy logits -> PMAP probability maps")
    p.add_argument("--logits", required=True, nargs="+", type=Path)
    p.add_argument("--classes", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_probs)

    return parser


def cmd_features(args: argparse.Namespace) -> int:
    config = ExportConfig(
        resize_rule=args.kind,
        weights=args.weights,
        include_final_pool=args.include_final_pool,
    )
    for path in export_features(args.images, args.out, config):
        print(f"wrote {path}")
    return 0


def cmd_probs(args: argparse.Namespace) -> int:
    for path in export_probs(args.logits, args.classes, args.out):
        print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
