"""Network morphology metrics, distributions, and repeatability stats.

All per-element statistics run over the network's active elements
(neither twig-suppressed nor curated out). Densities divide by the
analysis-region pixel count so circular ROIs are handled correctly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .segment import BinaryMask
from .topology import Skeleton, VesselNetwork

DIAMETER_BIN_UM = 5.0
LENGTH_BIN_MM = 0.1
TORTUOSITY_BIN = 0.05

CR_FACTOR = 2.77  # coefficient of repeatability multiplier
CI_Z = 1.96


@dataclass(frozen=True)
class Histogram:
    """Fixed-width histogram starting at zero."""

    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        e = np.ascontiguousarray(np.asarray(self.edges, dtype=np.float64))
        c = np.ascontiguousarray(np.asarray(self.counts, dtype=np.int64))
        if len(e) != len(c) + 1:
            raise ValueError("histogram needs len(edges) == len(counts) + 1")
        e.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "counts", c)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def as_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist()}


@dataclass(frozen=True)
class MetricsReport:
    vad_percent: float
    vld_percent: float
    mean_diameter_um: float
    median_diameter_um: float
    total_vessel_length_mm: float
    mean_tortuosity: float
    branchpoint_density_per_mm: float
    fractal_dimension: float
    fd_stddev: float
    cf: float
    diameter_histogram: Histogram
    length_histogram: Histogram
    tortuosity_histogram: Histogram
    counts: dict[str, int] = field(default_factory=dict)
    parameters: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "vad_percent": self.vad_percent,
            "vld_percent": self.vld_percent,
            "mean_diameter_um": self.mean_diameter_um,
            "median_diameter_um": self.median_diameter_um,
            "total_vessel_length_mm": self.total_vessel_length_mm,
            "mean_tortuosity": self.mean_tortuosity,
            "branchpoint_density_per_mm": self.branchpoint_density_per_mm,
            "fractal_dimension": self.fractal_dimension,
            "fd_stddev": self.fd_stddev,
            "cf": self.cf,
            "histograms": {
                "diameter_um": self.diameter_histogram.as_dict(),
                "length_mm": self.length_histogram.as_dict(),
                "tortuosity": self.tortuosity_histogram.as_dict(),
            },
            "counts": dict(self.counts),
            "parameters": dict(self.parameters),
        }


@dataclass(frozen=True)
class RepeatabilityResult:
    mean: float
    sw: float
    cr: float
    ci_low: float
    ci_high: float
    n_subjects: int
    m_repeats: int

    def __post_init__(self):
        if self.n_subjects < 2 or self.m_repeats < 2:
            raise ValueError("repeatability needs n >= 2 subjects and m >= 2 repeats")
        if not (self.ci_low <= self.cr <= self.ci_high):
            raise ValueError("confidence interval must bracket CR")


def _fixed_histogram(values: np.ndarray, bin_width: float) -> Histogram:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return Histogram(edges=np.array([0.0, bin_width]), counts=np.array([0]))
    nbins = int(np.floor(values.max() / bin_width)) + 1
    edges = bin_width * np.arange(nbins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges=edges, counts=counts)


def vessel_area_density(mask: BinaryMask) -> float:
    """Vessel pixels as a percentage of the analysis area."""
    if mask.effective_area_px == 0:
        raise ValueError("zero analysis area")
    return 100.0 * mask.vessel_px / mask.effective_area_px


def vessel_length_density(skel: Skeleton) -> float:
    """Skeleton pixels as a percentage of the analysis area (1 px vessel
    diameter assumed)."""
    if skel.effective_area_px == 0:
        raise ValueError("zero analysis area")
    return 100.0 * skel.pixel_count / skel.effective_area_px


def _active_diameters(net: VesselNetwork) -> np.ndarray:
    return np.array([e.mean_diameter_um for e in net.active_elements])


def diameter_stats(net: VesselNetwork) -> tuple[float, float, Histogram]:
    """Mean and median of per-element mean diameters, plus histogram."""
    diams = _active_diameters(net)
    if diams.size == 0:
        raise ValueError("no measurable elements; image may need exclusion or curation")
    hist = _fixed_histogram(diams, DIAMETER_BIN_UM)
    return float(diams.mean()), float(np.median(diams)), hist


def total_vessel_length_mm(net: VesselNetwork) -> float:
    return sum(e.arc_length_um for e in net.active_elements) / 1000.0


def length_stats(net: VesselNetwork) -> tuple[float, Histogram]:
    lengths_mm = np.array([e.arc_length_um / 1000.0 for e in net.active_elements])
    return float(lengths_mm.sum()), _fixed_histogram(lengths_mm, LENGTH_BIN_MM)


def tortuosity_stats(net: VesselNetwork) -> tuple[float, Histogram, int]:
    """Mean tortuosity over active non-loop elements; loops are skipped
    and their count returned. Mean is 0 when nothing is eligible."""
    values = []
    skipped = 0
    for e in net.active_elements:
        t = e.tortuosity()
        if t is None:
            skipped += 1
        else:
            values.append(t)
    arr = np.array(values)
    mean = float(arr.mean()) if arr.size else 0.0
    return mean, _fixed_histogram(arr, TORTUOSITY_BIN), skipped


def branchpoint_density(net: VesselNetwork) -> float:
    """Nodes per millimeter of traced vessel length."""
    total_mm = total_vessel_length_mm(net)
    if total_mm <= 0:
        raise ValueError("zero total vessel length")
    return len(net.nodes) / total_mm


def _box_sizes(shape: tuple[int, int]) -> list[int]:
    limit = min(shape) / 4
    sizes = []
    l = 2
    while l <= limit:
        sizes.append(l)
        l *= 2
    return sizes


def _box_count(bits: np.ndarray, l: int) -> int:
    ys = np.arange(0, bits.shape[0], l)
    xs = np.arange(0, bits.shape[1], l)
    rows = np.add.reduceat(bits.astype(np.int64), ys, axis=0)
    cells = np.add.reduceat(rows, xs, axis=1)
    return int((cells > 0).sum())


def fractal_dimension(skel: Skeleton) -> tuple[float, float]:
    """Box-counting dimension of the centerline.

    Boxes of side l = 2, 4, ..., up to min(W, H)/4, anchored at the
    origin. The dimension is the negated least-squares slope of log10
    N(l) against log10 l; the spread of consecutive-pair local slopes
    (population stddev) indicates how linear the fit is.
    """
    bits = skel.bits
    if not bits.any():
        raise ValueError("empty skeleton has no dimension")
    sizes = _box_sizes(bits.shape)
    if len(sizes) < 3:
        raise ValueError(f"need >= 3 box sizes, image supports {len(sizes)}")
    counts = np.array([_box_count(bits, l) for l in sizes], dtype=np.float64)
    log_l = np.log10(np.array(sizes, dtype=np.float64))
    log_n = np.log10(counts)
    slope = np.polyfit(log_l, log_n, 1)[0]
    local = -(np.diff(log_n) / np.diff(log_l))
    return float(-slope), float(np.std(local))


def connectivity_factor(net: VesselNetwork) -> float:
    """Fraction of active elements connected to the network: 1 - S_i/S_t."""
    if net.s_t == 0:
        raise ValueError("network has no active elements")
    return 1.0 - net.s_i / net.s_t


def repeatability(values) -> RepeatabilityResult:
    """Within-subject repeatability from an n-subjects by m-repeats grid.

    S_w is the square root of the mean per-subject sample variance
    (m - 1 divisor); CR = 2.77 S_w; the 95% interval on CR is
    CR +/- 1.96 S_w / sqrt(2 n (m - 1)).
    """
    rows = [np.asarray(r, dtype=np.float64) for r in values]
    if len(rows) < 2:
        raise ValueError("need at least 2 subjects")
    m = len(rows[0])
    if m < 2:
        raise ValueError("need at least 2 repeats per subject")
    if any(len(r) != m for r in rows):
        raise ValueError("ragged repeat matrix")
    grid = np.vstack(rows)
    per_subject_var = grid.var(axis=1, ddof=1)
    sw = float(np.sqrt(per_subject_var.mean()))
    cr = CR_FACTOR * sw
    half = CI_Z * sw / np.sqrt(2.0 * len(rows) * (m - 1))
    return RepeatabilityResult(
        mean=float(grid.mean()),
        sw=sw,
        cr=cr,
        ci_low=cr - half,
        ci_high=cr + half,
        n_subjects=len(rows),
        m_repeats=m,
    )


def segment_table(net: VesselNetwork) -> list[dict]:
    """One record per element, including suppressed/curated ones."""
    records = []
    for e in net.elements:
        records.append(
            {
                "id": e.id,
                "class": e.element_class,
                "length_um": e.arc_length_um,
                "mean_diameter_um": e.mean_diameter_um,
                "tortuosity": e.tortuosity(),
                "suppressed": e.suppressed,
                "curated_out": e.curated_out,
            }
        )
    return records


def histogram_peaks(hist: Histogram, n: int = 2) -> list[float]:
    """Centers of the n most-populated non-adjacent bins, largest count
    first. Used to read modes off multimodal diameter histograms."""
    order = np.argsort(hist.counts, kind="stable")[::-1]
    picked: list[int] = []
    for idx in order:
        if hist.counts[idx] == 0:
            break
        if any(abs(idx - p) <= 1 for p in picked):
            continue
        picked.append(int(idx))
        if len(picked) == n:
            break
    centers = hist.centers
    return [float(centers[i]) for i in picked]


def compute_report(
    mask: BinaryMask,
    skel: Skeleton,
    net: VesselNetwork,
    parameters: dict[str, Any] | None = None,
    fd_on_mask: bool = False,
) -> MetricsReport:
    """Assemble the full metrics report for one analyzed image.

    ``fd_on_mask`` switches the box-counting input from the centerline
    to the full vessel mask for studies that prefer area-based scaling.
    """
    mean_d, median_d, diam_hist = diameter_stats(net)
    total_mm, length_hist = length_stats(net)
    mean_tort, tort_hist, n_loops = tortuosity_stats(net)
    fd_bits = skel
    if fd_on_mask:
        fd_bits = Skeleton(
            bits=mask.bits,
            calibration=mask.calibration,
            effective_area_px=mask.effective_area_px,
        )
    fd, fd_std = fractal_dimension(fd_bits)
    return MetricsReport(
        vad_percent=vessel_area_density(mask),
        vld_percent=vessel_length_density(skel),
        mean_diameter_um=mean_d,
        median_diameter_um=median_d,
        total_vessel_length_mm=total_mm,
        mean_tortuosity=mean_tort,
        branchpoint_density_per_mm=branchpoint_density(net),
        fractal_dimension=fd,
        fd_stddev=fd_std,
        cf=connectivity_factor(net),
        diameter_histogram=diam_hist,
        length_histogram=length_hist,
        tortuosity_histogram=tort_hist,
        counts={
            "elements_total": len(net.elements),
            "elements_active": net.s_t,
            "elements_isolated_active": net.s_i,
            "nodes": len(net.nodes),
            "meshes": len(net.meshes),
            "loops_excluded_from_tortuosity": n_loops,
        },
        parameters=dict(parameters or {}),
    )
