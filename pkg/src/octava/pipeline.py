"""End-to-end orchestration: analysis configuration, the stage runner,
artifact emission, and parallel batch execution.

A run is fully determined by the input bytes and the configuration:
artifact files contain no timestamps or machine state, so re-running a
config on the same image reproduces every output byte for byte. Stage
failures carry the stage name so batch logs and HTTP errors can say
where an image fell over.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import render
from .enhance import FrangiParams, frangi_vesselness, median_filter
from .imagecore import (
    Calibration,
    GrayImage,
    RoiSpec,
    load_image,
    resample,
    select_roi,
    sidecar_calibration,
)
from .metrics import MetricsReport, RepeatabilityResult, compute_report, repeatability, segment_table
from .segment import BinaryMask, SegmentationMethod, binarize
from .topology import Skeleton, ThicknessMap, VesselNetwork, extract_network, local_thickness, skeletonize

STAGES = (
    "load",
    "roi",
    "resample",
    "invert",
    "median",
    "frangi",
    "binarize",
    "skeletonize",
    "thickness",
    "network",
    "metrics",
    "emit",
)

METRIC_COLUMNS = (
    "vad_percent",
    "vld_percent",
    "mean_diameter_um",
    "median_diameter_um",
    "total_vessel_length_mm",
    "mean_tortuosity",
    "branchpoint_density_per_mm",
    "fractal_dimension",
    "fd_stddev",
    "cf",
)

SEGMENT_CSV_COLUMNS = (
    "id",
    "class",
    "length_um",
    "mean_diameter_um",
    "tortuosity",
    "suppressed",
    "curated_out",
)

REPORT_SCHEMA = "octava-report-v1"


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names where."""

    def __init__(self, stage: str, message: str):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message


@dataclass(frozen=True)
class AnalysisConfig:
    """Everything a run needs: processing parameters plus I/O plumbing.

    Processing fields (everything except ``inputs``, ``output_dir``,
    ``emit`` and ``workers``) define the config hash; two configs with
    equal hashes produce identical metrics on identical input bytes.
    """

    inputs: tuple[str, ...] = ()
    output_dir: str = "octava-out"
    pixel_size_um: float | None = None  # None: read the sidecar JSON
    axial_span_um: float | None = None
    roi: RoiSpec | None = None
    resample_factor: float = 1.0
    invert: bool = False
    median_kernel: int = 3
    frangi: FrangiParams | None = field(default_factory=FrangiParams)
    method: SegmentationMethod = field(default_factory=SegmentationMethod)
    twig_size_um: float | None = None  # None: 2 * pixel size
    fd_on_mask: bool = False
    emit: tuple[str, ...] = ("overlay", "heatmap", "histograms", "csv", "json")
    workers: int = 4

    def __post_init__(self):
        if self.median_kernel < 1 or self.median_kernel % 2 == 0:
            raise ValueError(f"median_kernel must be odd and >= 1, got {self.median_kernel}")
        if not (self.resample_factor > 0):
            raise ValueError(f"resample_factor must be > 0, got {self.resample_factor}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.twig_size_um is not None and self.twig_size_um < 0:
            raise ValueError(f"twig_size_um must be >= 0, got {self.twig_size_um}")
        bad = set(self.emit) - {"overlay", "heatmap", "histograms", "csv", "json"}
        if bad:
            raise ValueError(f"unknown emit flags {sorted(bad)}")
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))
        object.__setattr__(self, "emit", tuple(self.emit))

    def processing_dict(self) -> dict:
        """The parameters that shape the result, in stable key order."""
        return {
            "pixel_size_um": self.pixel_size_um,
            "axial_span_um": self.axial_span_um,
            "roi": None if self.roi is None else vars(self.roi).copy(),
            "resample_factor": self.resample_factor,
            "invert": self.invert,
            "median_kernel": self.median_kernel,
            "frangi": None if self.frangi is None else vars(self.frangi).copy(),
            "method": vars(self.method).copy(),
            "twig_size_um": self.twig_size_um,
            "fd_on_mask": self.fd_on_mask,
        }

    def as_dict(self) -> dict:
        d = self.processing_dict()
        d.update(
            {
                "inputs": list(self.inputs),
                "output_dir": self.output_dir,
                "emit": list(self.emit),
                "workers": self.workers,
            }
        )
        return d

    def config_hash(self) -> str:
        canon = json.dumps(self.processing_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()

    @staticmethod
    def from_dict(d: dict) -> "AnalysisConfig":
        known = {
            "inputs",
            "output_dir",
            "pixel_size_um",
            "axial_span_um",
            "roi",
            "resample_factor",
            "invert",
            "median_kernel",
            "frangi",
            "method",
            "twig_size_um",
            "fd_on_mask",
            "emit",
            "workers",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        kw = dict(d)
        if "roi" in kw and isinstance(kw["roi"], dict):
            kw["roi"] = RoiSpec(**kw["roi"])
        if "frangi" in kw and isinstance(kw["frangi"], dict):
            kw["frangi"] = FrangiParams(**kw["frangi"])
        if "method" in kw and isinstance(kw["method"], dict):
            kw["method"] = SegmentationMethod(**kw["method"])
        if "inputs" in kw:
            kw["inputs"] = tuple(kw["inputs"])
        if "emit" in kw:
            kw["emit"] = tuple(kw["emit"])
        return AnalysisConfig(**kw)

    def merged(self, overrides: dict) -> "AnalysisConfig":
        """New config with override values applied on top (overrides
        win). Nested frangi/method/roi dicts merge field-wise; an
        explicit ``None`` disables the stage (frangi) or clears the
        value."""
        base = self.as_dict()
        out = dict(base)
        for key, val in overrides.items():
            if key in ("frangi", "method", "roi") and isinstance(val, dict):
                cur = base.get(key)
                nested = dict(cur) if isinstance(cur, dict) and cur is not None else {}
                if key == "frangi" and cur is None:
                    nested = vars(FrangiParams()).copy()
                nested.update(val)
                out[key] = nested
            else:
                out[key] = val
        return AnalysisConfig.from_dict(out)


def load_config(path: str | Path) -> AnalysisConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ValueError(f"config file {path} must contain a JSON object")
    return AnalysisConfig.from_dict(payload)


@dataclass
class StageOutputs:
    """Every intermediate a run produces, for emission and inspection."""

    image: GrayImage  # after ROI / resample / polarity
    enhanced: GrayImage  # after median and (optionally) vesselness
    mask: BinaryMask
    skeleton: Skeleton
    thickness: ThicknessMap
    network: VesselNetwork  # automatic network, before any curation
    report: MetricsReport
    warnings: list[str] = field(default_factory=list)
    twig_size_um: float = 0.0


@dataclass
class RunRecord:
    input: str
    ok: bool
    config_hash: str
    input_sha256: str | None = None
    report: MetricsReport | None = None
    warnings: list[str] = field(default_factory=list)
    error_stage: str | None = None
    error: str | None = None
    elapsed_s: float = 0.0
    artifacts: dict[str, str] = field(default_factory=dict)


def _run_stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, str(exc)) from exc


def report_parameters(cfg: AnalysisConfig, twig_size_um: float, curation_edits: int = 0) -> dict:
    return {
        "method": cfg.method.name,
        "sigma_max": None if cfg.frangi is None else cfg.frangi.sigma_max,
        "twig_size_um": twig_size_um,
        "curation_edits": curation_edits,
    }


def execute(image: GrayImage, cfg: AnalysisConfig) -> StageOutputs:
    """Run every processing stage on an already-loaded image."""
    img = image
    if cfg.roi is not None:
        img = _run_stage("roi", select_roi, img, cfg.roi)
    if cfg.resample_factor != 1.0:
        img = _run_stage("resample", resample, img, cfg.resample_factor)
    if cfg.invert:
        img = _run_stage("invert", lambda im: im.with_pixels(1.0 - im.pixels), img)
    enhanced = _run_stage("median", median_filter, img, cfg.median_kernel)
    if cfg.frangi is not None:
        enhanced = _run_stage("frangi", frangi_vesselness, enhanced, cfg.frangi)
    mask = _run_stage("binarize", binarize, enhanced, cfg.method)
    skel = _run_stage("skeletonize", skeletonize, mask)
    thick = _run_stage("thickness", local_thickness, mask)
    twig = cfg.twig_size_um
    if twig is None:
        twig = 2.0 * img.calibration.pixel_size_um
    net = _run_stage("network", extract_network, skel, thick, twig)
    report = _run_stage(
        "metrics",
        compute_report,
        mask,
        skel,
        net,
        parameters=report_parameters(cfg, twig),
        fd_on_mask=cfg.fd_on_mask,
    )

    warnings = []
    suppressed = sum(1 for e in net.elements if e.suppressed)
    if suppressed:
        warnings.append(f"{suppressed} twig elements below {twig:g} um suppressed")
    loops = report.counts.get("loops_excluded_from_tortuosity", 0)
    if loops:
        warnings.append(f"{loops} loop elements excluded from tortuosity statistics")
    return StageOutputs(
        image=img,
        enhanced=enhanced,
        mask=mask,
        skeleton=skel,
        thickness=thick,
        network=net,
        report=report,
        warnings=warnings,
        twig_size_um=twig,
    )


def _resolve_calibration(cfg: AnalysisConfig, input_path: Path) -> Calibration:
    if cfg.pixel_size_um is not None:
        return Calibration(pixel_size_um=cfg.pixel_size_um, axial_span_um=cfg.axial_span_um)
    sidecar = sidecar_calibration(input_path)
    if sidecar is None:
        raise PipelineError(
            "load",
            f"no calibration for {input_path.name}: pass pixel_size_um or "
            f"provide a sidecar {input_path.with_suffix('.json').name}",
        )
    return sidecar


def report_payload(
    cfg: AnalysisConfig,
    report: MetricsReport,
    warnings: list[str],
    input_sha256: str | None,
) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "config": cfg.processing_dict(),
        "config_hash": cfg.config_hash(),
        "input_sha256": input_sha256,
        "metrics": report.as_dict(),
        "warnings": list(warnings),
    }


def json_bytes(payload: dict) -> bytes:
    return (json.dumps(payload, indent=2) + "\n").encode()


def segments_csv_bytes(net: VesselNetwork) -> bytes:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SEGMENT_CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in segment_table(net):
        row = dict(rec)
        if row["tortuosity"] is None:
            row["tortuosity"] = ""
        writer.writerow(row)
    return buf.getvalue().encode()


def render_artifact_files(
    out: StageOutputs,
    net: VesselNetwork,
    report: MetricsReport,
    cfg: AnalysisConfig,
    warnings: list[str],
    input_sha256: str | None,
) -> dict[str, bytes]:
    """Artifact name -> file bytes for the configured emit set.

    The same byte streams back the CLI output directory and the service
    export bundle, which keeps the two interfaces bit-compatible.
    """
    files: dict[str, bytes] = {}
    emit = set(cfg.emit)
    if "json" in emit:
        files["report.json"] = json_bytes(report_payload(cfg, report, warnings, input_sha256))
        files["geometry.json"] = json_bytes(render.network_geometry(net))
    if "csv" in emit:
        files["segments.csv"] = segments_csv_bytes(net)
    if "overlay" in emit:
        files["overlay.png"] = render.png_bytes(render.render_overlay(out.image, net))
    if "heatmap" in emit:
        files["thickness.png"] = render.png_bytes(render.render_thickness(out.thickness))
    if "histograms" in emit:
        files["histograms.png"] = render.render_histogram_figure(report)
    return files


def _write_files(directory: Path, files: dict[str, bytes]) -> dict[str, str]:
    directory.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, data in files.items():
        path = directory / name
        path.write_bytes(data)
        written[name] = str(path)
    return written


def run_single(cfg: AnalysisConfig, input_path: str | Path | None = None,
               out_dir: Path | None = None) -> RunRecord:
    """Analyze one image and write its artifact directory."""
    if input_path is None:
        if not cfg.inputs:
            raise PipelineError("load", "no input image given")
        input_path = cfg.inputs[0]
    input_path = Path(input_path)
    started = time.perf_counter()
    record = RunRecord(input=str(input_path), ok=False, config_hash=cfg.config_hash())
    try:
        calibration = _resolve_calibration(cfg, input_path)
        image = _run_stage("load", load_image, input_path, calibration)
        record.input_sha256 = hashlib.sha256(input_path.read_bytes()).hexdigest()
        out = execute(image, cfg)
        files = _run_stage(
            "emit",
            render_artifact_files,
            out,
            out.network,
            out.report,
            cfg,
            out.warnings,
            record.input_sha256,
        )
        target = out_dir if out_dir is not None else Path(cfg.output_dir) / input_path.stem
        record.artifacts = _run_stage("emit", _write_files, target, files)
        record.report = out.report
        record.warnings = out.warnings
        record.ok = True
    except PipelineError as exc:
        record.error_stage = exc.stage
        record.error = exc.message
    record.elapsed_s = time.perf_counter() - started
    return record


def _batch_dirs(out_root: Path, inputs: list[Path]) -> list[Path]:
    """Per-input artifact directories, deduplicated in input order."""
    seen: dict[str, int] = {}
    dirs = []
    for p in inputs:
        n = seen.get(p.stem, 0) + 1
        seen[p.stem] = n
        dirs.append(out_root / (p.stem if n == 1 else f"{p.stem}-{n}"))
    return dirs


def summary_csv_bytes(records: list[RunRecord]) -> bytes:
    buf = io.StringIO()
    columns = ("input", "status", "error_stage", "error") + METRIC_COLUMNS
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        row = {
            "input": rec.input,
            "status": "ok" if rec.ok else "failed",
            "error_stage": rec.error_stage or "",
            "error": rec.error or "",
        }
        if rec.report is not None:
            d = rec.report.as_dict()
            for col in METRIC_COLUMNS:
                row[col] = d[col]
        else:
            for col in METRIC_COLUMNS:
                row[col] = ""
        writer.writerow(row)
    return buf.getvalue().encode()


def run_batch(cfg: AnalysisConfig, inputs=None) -> tuple[list[RunRecord], Path]:
    """Analyze many images in parallel; failures are recorded per image
    and never abort the rest. Returns the records in input order plus
    the path of the combined summary CSV."""
    paths = [Path(p) for p in (inputs if inputs is not None else cfg.inputs)]
    if not paths:
        raise ValueError("batch needs at least one input image")
    out_root = Path(cfg.output_dir)
    dirs = _batch_dirs(out_root, paths)

    def one(path: Path, target: Path) -> RunRecord:
        try:
            return run_single(cfg, input_path=path, out_dir=target)
        except Exception as exc:  # keep the batch alive no matter what
            return RunRecord(
                input=str(path),
                ok=False,
                config_hash=cfg.config_hash(),
                error_stage="load",
                error=str(exc),
            )

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(one, p, d) for p, d in zip(paths, dirs)]
        records = [f.result() for f in futures]

    out_root.mkdir(parents=True, exist_ok=True)
    summary = out_root / "summary.csv"
    summary.write_bytes(summary_csv_bytes(records))
    return records, summary


def repeatability_from_csv(
    path: str | Path,
    metric: str,
    n_subjects: int | None = None,
    m_repeats: int | None = None,
) -> RepeatabilityResult:
    """Repeatability statistics for one metric column of a summary CSV.

    Rows are taken in file order and reshaped subject-major: the first
    ``m_repeats`` rows are subject one's repeats, and so on. Failed rows
    must be removed first; silently skipping them would misalign the
    grid.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or metric not in reader.fieldnames:
            raise ValueError(f"no column {metric!r} in {path}")
        rows = list(reader)
    bad = [r for r in rows if r.get("status", "ok") != "ok" or r[metric] == ""]
    if bad:
        raise ValueError(
            f"{len(bad)} rows have no {metric!r} value; exclude failed images before "
            "computing repeatability"
        )
    values = [float(r[metric]) for r in rows]
    total = len(values)
    if n_subjects is None and m_repeats is None:
        raise ValueError("give n_subjects or m_repeats to shape the grid")
    if n_subjects is None:
        n_subjects = total // m_repeats
    if m_repeats is None:
        m_repeats = total // n_subjects
    if n_subjects * m_repeats != total:
        raise ValueError(
            f"{total} rows do not form an {n_subjects} x {m_repeats} subject/repeat grid"
        )
    grid = [values[i * m_repeats : (i + 1) * m_repeats] for i in range(n_subjects)]
    return repeatability(grid)
