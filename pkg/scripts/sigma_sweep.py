#!/usr/bin/env python3
"""Sweep the vesselness scale cap over one image and show how the headline
metrics move.

The cap should sit near (widest expected vessel diameter in um) / 10; too
low suppresses wide vessels, too high inflates their apparent width. Use
--expect-diameter to print the suggested cap for your data next to the
sweep table.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from octava.enhance import sigma_max_for_diameter
from octava.imagecore import Calibration, load_image, sidecar_calibration
from octava.pipeline import AnalysisConfig, PipelineError, execute
from octava.segment import SegmentationMethod


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("image", help="8/16-bit PNG or TIFF")
    ap.add_argument("--pixel-size-um", type=float, default=None,
                    help="lateral calibration (falls back to the JSON sidecar)")
    ap.add_argument("--sigmas", default="2,4,6,8,12,16",
                    help="comma list of sigma_max values")
    ap.add_argument("--method", default="fuzzy")
    ap.add_argument("--expect-diameter", type=float, default=None,
                    help="widest expected vessel in um; prints the suggested cap")
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

    if args.expect_diameter is not None:
        cap = sigma_max_for_diameter(args.expect_diameter)
        print(f"suggested sigma_max for {args.expect_diameter:g} um vessels: {cap}\n")

    print(f"{'sigma_max':>9s} {'VAD %':>8s} {'VLD %':>8s} {'median um':>10s} "
          f"{'length mm':>10s}")
    for token in args.sigmas.split(","):
        sigma = float(token)
        cfg = AnalysisConfig(
            pixel_size_um=cal.pixel_size_um,
            method=SegmentationMethod(name=args.method),
        ).merged({"frangi": {"sigma_max": sigma}})
        try:
            out = execute(img, cfg)
        except PipelineError as err:
            print(f"{sigma:9.1f}  [{err.stage}] {err.message}")
            continue
        m = out.report
        print(f"{sigma:9.1f} {m.vad_percent:8.2f} {m.vld_percent:8.2f} "
              f"{m.median_diameter_um:10.1f} {m.total_vessel_length_mm:10.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
