"""Batch export command: run a detector over an image directory."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .detectors import SUPPORTED, MissingWeightsError
from .export import export_detections

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".tif", ".tiff"}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="detector-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="export score maps, keypoints and descriptors")
    p.add_argument("--detector", required=True, help=f"one of: {', '.join(SUPPORTED)}")
    p.add_argument("--images", required=True, help="directory of input images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--weights", default=None, help="checkpoint path for learned detectors")
    p.add_argument("--nms-radius", type=int, default=4)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--max-keypoints", type=int, default=1000)
    args = parser.parse_args(argv)

    images_dir = Path(args.images)
    if not images_dir.is_dir():
        print(f"error: not a directory: {images_dir}", file=sys.stderr)
        return 2
    images = sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        print(f"error: no images found in {images_dir}", file=sys.stderr)
        return 2

    kwargs = {"nms_radius": args.nms_radius, "max_keypoints": args.max_keypoints}
    if args.threshold is not None:
        kwargs["threshold"] = args.threshold
    try:
        for image in images:
            export = export_detections(
                image, args.detector, args.out, weights=args.weights, **kwargs
            )
            print(f"{image.name}: {export.n_keypoints} keypoints -> {export.score_map_path.name}")
    except (MissingWeightsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
