#!/usr/bin/env python3
"""Run several thresholding methods on one image and tabulate vessel area
density and connectivity factor per method.

Preprocessing mirrors the analysis pipeline (median filter, then optional
vesselness enhancement) so the numbers are comparable with full runs. CF
close to 1 with a plausible VAD usually separates the usable methods from
the ones that shatter the network on a given contrast profile.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from octava.enhance import FrangiParams, frangi_vesselness, median_filter
from octava.imagecore import Calibration, load_image, sidecar_calibration
from octava.segment import METHOD_NAMES, SegmentationMethod, compare_methods


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("image", help="8/16-bit PNG or TIFF")
    ap.add_argument("--pixel-size-um", type=float, default=None,
                    help="lateral calibration (falls back to the JSON sidecar)")
    ap.add_argument("--methods", default=",".join(METHOD_NAMES),
                    help="comma list (default: all)")
    ap.add_argument("--median", type=int, default=3, help="median kernel, odd")
    ap.add_argument("--no-frangi", action="store_true",
                    help="threshold the filtered image directly")
    ap.add_argument("--sigma-max", type=float, default=8.0)
    args = ap.parse_args()

    if args.pixel_size_um is not None:
        cal = Calibration(pixel_size_um=args.pixel_size_um)
    else:
        cal = sidecar_calibration(args.image)
        if cal is None:
            print("no calibration: pass --pixel-size-um or add a sidecar",
                  file=sys.stderr)
            return 1

    img = load_image(args.image, cal)
    img = median_filter(img, args.median)
    if not args.no_frangi:
        img = frangi_vesselness(img, FrangiParams(sigma_max=args.sigma_max))

    methods = [SegmentationMethod(name.strip()) for name in args.methods.split(",")]
    table = compare_methods(img, methods)
    print(f"{'method':10s} {'VAD %':>8s} {'CF':>6s}")
    for row in table.rows:
        print(f"{row.method:10s} {row.vad_percent:8.2f} {row.cf:6.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
