"""Command line for the embedding exporter."""

from __future__ import annotations

import argparse
import logging
import sys

from .export import BACKBONES, ExportError, ExportSpec, export


def build_parser():
    p = argparse.ArgumentParser(
        prog="embed-export",
        description="Export pooled backbone embeddings over an image "
                    "folder to an OCCF feature file.")
    p.add_argument("image_dir")
    p.add_argument("--backbone", choices=BACKBONES, default="resnet50")
    p.add_argument("--weights", choices=["pretrained", "none"],
                   default="pretrained",
                   help="'none' uses a seeded random initialization "
                        "(offline-friendly)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0,
                   help="weight-init seed used with --weights none")
    p.add_argument("--out", default="features.occf")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    args = build_parser().parse_args(argv)
    spec = ExportSpec(image_dir=args.image_dir, backbone=args.backbone,
                      weights=args.weights, batch_size=args.batch_size,
                      out_path=args.out, seed=args.seed)
    try:
        n = export(spec)
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {n} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
