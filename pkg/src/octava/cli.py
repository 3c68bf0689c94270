"""Command line front door.

Subcommands: ``analyze`` one image, ``batch`` a set, ``repeatability``
over a batch summary CSV, ``phantom`` generation, and ``serve`` for the
HTTP curation service. Processing parameters come from an optional JSON
config file with command-line flags layered on top (flags win).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .imagecore import save_image
from .phantom import (
    generate_grid_phantom,
    generate_network_phantom,
    grid_spec_from_dict,
    network_spec_from_dict,
)
from .pipeline import (
    METRIC_COLUMNS,
    AnalysisConfig,
    PipelineError,
    RunRecord,
    load_config,
    repeatability_from_csv,
    run_batch,
    run_single,
)
from .segment import METHOD_NAMES

EXIT_OK = 0
EXIT_FAILURES = 2


def _add_processing_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="JSON", help="analysis config file; flags override it")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--pixel-size-um", type=float, metavar="F",
                   help="pixel calibration; omit to read the image's sidecar JSON")
    p.add_argument("--resample", type=float, metavar="F", help="resampling factor")
    p.add_argument("--invert", action="store_true", help="dark-vessel input: invert intensities")
    p.add_argument("--median", type=int, metavar="K", help="median filter kernel (odd, 1 disables)")
    p.add_argument("--sigma-max", type=float, metavar="N", help="top of the vesselness scale sweep")
    p.add_argument("--no-frangi", action="store_true", help="skip the vesselness filter")
    p.add_argument("--method", choices=METHOD_NAMES, help="segmentation method")
    p.add_argument("--window", type=int, metavar="K", help="local-threshold window (odd)")
    p.add_argument("--offset", type=float, metavar="V", help="local-threshold offset")
    p.add_argument("--twig-size-um", type=float, metavar="F",
                   help="suppress isolated elements thinner than this")
    p.add_argument("--fd-on-mask", action="store_true",
                   help="box-count the mask instead of the skeleton")
    p.add_argument("--emit", metavar="LIST",
                   help="comma list from overlay,heatmap,histograms,csv,json")


def _overrides_from_args(args: argparse.Namespace) -> dict:
    ov: dict = {}
    if args.out is not None:
        ov["output_dir"] = args.out
    if args.pixel_size_um is not None:
        ov["pixel_size_um"] = args.pixel_size_um
    if args.resample is not None:
        ov["resample_factor"] = args.resample
    if args.invert:
        ov["invert"] = True
    if args.median is not None:
        ov["median_kernel"] = args.median
    if args.sigma_max is not None:
        ov["frangi"] = {"sigma_max": args.sigma_max}
    if args.no_frangi:
        ov["frangi"] = None
    method = {}
    if args.method is not None:
        method["name"] = args.method
    if args.window is not None:
        method["window"] = args.window
    if args.offset is not None:
        method["offset"] = args.offset
    if method:
        ov["method"] = method
    if args.twig_size_um is not None:
        ov["twig_size_um"] = args.twig_size_um
    if args.fd_on_mask:
        ov["fd_on_mask"] = True
    if args.emit is not None:
        ov["emit"] = tuple(s for s in args.emit.split(",") if s)
    if getattr(args, "workers", None) is not None:
        ov["workers"] = args.workers
    return ov


def _build_config(args: argparse.Namespace, inputs: list[str]) -> AnalysisConfig:
    cfg = load_config(args.config) if args.config else AnalysisConfig()
    overrides = _overrides_from_args(args)
    if inputs:
        overrides["inputs"] = tuple(inputs)
    return cfg.merged(overrides)


def _print_record(rec: RunRecord) -> None:
    if not rec.ok:
        print(f"failed  {rec.input}  [{rec.error_stage}] {rec.error}")
        return
    print(f"ok      {rec.input}  ({rec.elapsed_s:.1f} s)")
    d = rec.report.as_dict()
    for name in METRIC_COLUMNS:
        print(f"    {name:28s} {d[name]:.6g}")
    for w in rec.warnings:
        print(f"    note: {w}")
    if rec.artifacts:
        print(f"    artifacts in {Path(next(iter(rec.artifacts.values()))).parent}")


def _cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _build_config(args, [args.input])
    rec = run_single(cfg)
    _print_record(rec)
    return EXIT_OK if rec.ok else EXIT_FAILURES


def _cmd_batch(args: argparse.Namespace) -> int:
    cfg = _build_config(args, list(args.inputs))
    records, summary = run_batch(cfg)
    for rec in records:
        status = "ok" if rec.ok else f"failed [{rec.error_stage}] {rec.error}"
        print(f"{rec.input}: {status}")
    n_bad = sum(1 for r in records if not r.ok)
    print(f"summary: {summary}  ({len(records) - n_bad}/{len(records)} succeeded)")
    return EXIT_OK if n_bad == 0 else EXIT_FAILURES


def _cmd_repeatability(args: argparse.Namespace) -> int:
    metrics = args.metric or list(METRIC_COLUMNS)
    results = {}
    for name in metrics:
        res = repeatability_from_csv(
            args.summary, name, n_subjects=args.subjects, m_repeats=args.repeats
        )
        results[name] = dataclasses.asdict(res)
        print(
            f"{name}: mean={res.mean:.6g} Sw={res.sw:.6g} CR={res.cr:.6g} "
            f"CI=[{res.ci_low:.6g}, {res.ci_high:.6g}] (n={res.n_subjects}, m={res.m_repeats})"
        )
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(results, indent=2) + "\n")
    return EXIT_OK


def _cmd_phantom(args: argparse.Namespace) -> int:
    payload = json.loads(Path(args.spec).read_text()) if args.spec else {}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.family == "grid":
        spec = grid_spec_from_dict(payload)
        img, gt = generate_grid_phantom(spec)
    else:
        spec = network_spec_from_dict(payload)
        img, gt = generate_network_phantom(spec)
    save_image(img, out / "phantom.png", bit_depth=16)
    # sidecar calibration lets the image feed straight back into analyze
    (out / "phantom.json").write_text(
        json.dumps({"pixel_size_um": spec.pixel_size_um}) + "\n"
    )
    truth = {
        "family": args.family,
        "spec": dataclasses.asdict(spec),
        "ground_truth": gt.as_dict(),
    }
    (out / "ground_truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    print(f"wrote {out / 'phantom.png'} and ground_truth.json")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(Path(args.sessions_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="octava", description="Vessel network quantification for en face angiography images"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="analyze a single image")
    p.add_argument("input", help="PNG or TIFF image")
    _add_processing_flags(p)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("batch", help="analyze many images, emit a summary CSV")
    p.add_argument("inputs", nargs="+", help="PNG or TIFF images")
    _add_processing_flags(p)
    p.add_argument("--workers", type=int, metavar="N", help="parallel image limit")
    p.set_defaults(fn=_cmd_batch)

    p = sub.add_parser("repeatability", help="within-subject statistics from a summary CSV")
    p.add_argument("summary", help="summary.csv from a batch run, rows subject-major")
    p.add_argument("--metric", action="append", metavar="NAME",
                   help="metric column (repeatable; default: all)")
    p.add_argument("--subjects", type=int, metavar="N", help="number of subjects")
    p.add_argument("--repeats", type=int, metavar="M", help="repeats per subject")
    p.add_argument("--json-out", metavar="PATH", help="also write results as JSON")
    p.set_defaults(fn=_cmd_repeatability)

    p = sub.add_parser("phantom", help="generate a validation phantom with ground truth")
    p.add_argument("family", choices=("grid", "network"))
    p.add_argument("--spec", metavar="JSON", help="phantom spec file (defaults used if omitted)")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(fn=_cmd_phantom)

    p = sub.add_parser("serve", help="run the HTTP curation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--sessions-dir", default="octava-sessions", metavar="DIR")
    p.set_defaults(fn=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
