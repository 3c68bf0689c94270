"""Binarization of enhanced MIP images.

Five methods are available. The histogram-based ones (kmeans, isodata,
fuzzy) decide vessel/background per intensity bin over a 256-bin
histogram spanning [min, max] of the analysis region, which makes the
masks exactly invariant to constant intensity shifts. ``fuzzy`` is the
recommended default; ``adaptive`` is the usual comparison baseline. The
remaining three are kept for benchmarking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imagecore import Calibration, GrayImage

NBINS = 256
METHOD_NAMES = ("global", "kmeans", "isodata", "adaptive", "fuzzy")

_FUZZY_DEFAULT_WINDOW = 15
_FCM_TOL = 1e-7
_FCM_MAX_ITER = 300


class DegenerateImageError(ValueError):
    """Image has no contrast in the analysis region.

    Raised instead of fabricating an arbitrary mask; such an image
    should be excluded from the study rather than quantified.
    """


@dataclass(frozen=True)
class SegmentationMethod:
    """Method selector plus the window/offset knobs used by the local
    methods. ``window=None`` picks the per-method default at run time
    (adaptive: quarter of the short image side, made odd; fuzzy: 15)."""

    name: str = "fuzzy"
    window: int | None = None
    offset: float = 0.0

    def __post_init__(self):
        if self.name not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.name!r}, expected one of {METHOD_NAMES}")
        if self.window is not None:
            if self.window < 3 or self.window % 2 == 0:
                raise ValueError(f"window must be odd and >= 3, got {self.window}")


@dataclass(frozen=True)
class BinaryMask:
    """Vessel/background bitmap with physical calibration.

    ``effective_area_px`` is the analysis-region size inherited from the
    ROI stage; density metrics divide by it, not by width*height.
    """

    bits: np.ndarray
    calibration: Calibration
    effective_area_px: int

    def __post_init__(self):
        b = np.ascontiguousarray(np.asarray(self.bits, dtype=bool))
        if b.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {b.shape}")
        if not (0 < self.effective_area_px <= b.size):
            raise ValueError(
                f"effective_area_px must be in (0, {b.size}], got {self.effective_area_px}"
            )
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def vessel_px(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    vad_percent: float
    cf: float


@dataclass(frozen=True)
class ComparisonTable:
    rows: list[ComparisonRow] = field(default_factory=list)


def _analysis_histogram(img: GrayImage):
    values = img.analysis_values()
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        raise DegenerateImageError(
            "image has no contrast in the analysis region; exclude it from analysis"
        )
    hist, edges = np.histogram(values, bins=NBINS, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return hist.astype(np.float64), centers, lo, hi


def _bin_indices(img: GrayImage, lo: float, hi: float) -> np.ndarray:
    idx = np.floor((img.pixels - lo) * (NBINS / (hi - lo))).astype(np.int64)
    return np.clip(idx, 0, NBINS - 1)


def _finish(img: GrayImage, vessel: np.ndarray) -> BinaryMask:
    if img.area_mask is not None:
        vessel = vessel & img.area_mask
    return BinaryMask(
        bits=vessel, calibration=img.calibration, effective_area_px=img.effective_area_px
    )


def _require_contrast(img: GrayImage) -> None:
    values = img.analysis_values()
    if float(values.max()) == float(values.min()):
        raise DegenerateImageError(
            "image has no contrast in the analysis region; exclude it from analysis"
        )


def _global_mean(img: GrayImage) -> np.ndarray:
    _require_contrast(img)
    mean = float(img.analysis_values().mean())
    return img.pixels > mean


def _isodata_boundary(hist: np.ndarray, centers: np.ndarray) -> int:
    """Ridler-Calvard iteration on the histogram; returns the boundary
    bin index (vessel = bins strictly above it)."""
    total = hist.sum()
    t = float((hist * centers).sum() / total)
    bin_width = centers[1] - centers[0]
    for _ in range(NBINS):
        below = centers <= t
        w0 = hist[below].sum()
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            break
        mu0 = (hist[below] * centers[below]).sum() / w0
        mu1 = (hist[~below] * centers[~below]).sum() / w1
        t_new = 0.5 * (mu0 + mu1)
        if abs(t_new - t) < bin_width:
            t = t_new
            break
        t = t_new
    return int(np.searchsorted(centers, t, side="right")) - 1


def _isodata(img: GrayImage) -> np.ndarray:
    hist, centers, lo, hi = _analysis_histogram(img)
    boundary = _isodata_boundary(hist, centers)
    return _bin_indices(img, lo, hi) > boundary


def _kmeans_boundary(hist: np.ndarray, centers: np.ndarray, values: np.ndarray) -> int:
    """Two-cluster Lloyd iteration on the histogram; deterministic
    percentile initialization. Returns the boundary bin index."""
    c0 = float(np.percentile(values, 25))
    c1 = float(np.percentile(values, 75))
    if c0 == c1:
        c0, c1 = float(centers[0]), float(centers[-1])
    assign = np.abs(centers - c0) > np.abs(centers - c1)  # True = cluster 1
    for _ in range(500):
        w0 = hist[~assign].sum()
        w1 = hist[assign].sum()
        if w0 > 0:
            c0 = (hist[~assign] * centers[~assign]).sum() / w0
        if w1 > 0:
            c1 = (hist[assign] * centers[assign]).sum() / w1
        new_assign = np.abs(centers - c0) > np.abs(centers - c1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    if c1 >= c0:
        vessel_bins = assign
    else:
        vessel_bins = ~assign
    idx = np.flatnonzero(vessel_bins)
    return int(idx[0]) - 1 if idx.size else NBINS - 1


def _kmeans(img: GrayImage) -> np.ndarray:
    hist, centers, lo, hi = _analysis_histogram(img)
    boundary = _kmeans_boundary(hist, centers, img.analysis_values())
    return _bin_indices(img, lo, hi) > boundary


def _adaptive(img: GrayImage, window: int | None, offset: float) -> np.ndarray:
    _require_contrast(img)
    if window is None:
        window = min(img.width, img.height) // 4
        if window % 2 == 0:
            window -= 1
        window = max(window, 3)
    local_mean = ndimage.uniform_filter(img.pixels, size=window, mode="nearest")
    return img.pixels > local_mean + offset


def _fuzzy_memberships(hist: np.ndarray, centers: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Two-class fuzzy c-means on the histogram (fuzzifier 2); returns
    per-bin membership in the brighter class."""
    c0 = float(np.percentile(values, 25))
    c1 = float(np.percentile(values, 75))
    if c0 == c1:
        c0, c1 = float(centers[0]), float(centers[-1])
    for _ in range(_FCM_MAX_ITER):
        d0 = np.abs(centers - c0)
        d1 = np.abs(centers - c1)
        # membership in class 1; exact hits get full membership
        with np.errstate(divide="ignore", invalid="ignore"):
            u1 = d0**2 / (d0**2 + d1**2)
        u1 = np.where(d1 == 0, 1.0, np.where(d0 == 0, 0.0, u1))
        u0 = 1.0 - u1
        w0 = hist * u0**2
        w1 = hist * u1**2
        n0 = (w0 * centers).sum() / w0.sum() if w0.sum() > 0 else c0
        n1 = (w1 * centers).sum() / w1.sum() if w1.sum() > 0 else c1
        if abs(n0 - c0) < _FCM_TOL and abs(n1 - c1) < _FCM_TOL:
            c0, c1 = n0, n1
            break
        c0, c1 = n0, n1
    if c1 >= c0:
        return u1
    return u0


def _fuzzy(img: GrayImage, window: int | None) -> np.ndarray:
    if window is None:
        window = _FUZZY_DEFAULT_WINDOW
    hist, centers, lo, hi = _analysis_histogram(img)
    member_by_bin = _fuzzy_memberships(hist, centers, img.analysis_values())
    member = member_by_bin[_bin_indices(img, lo, hi)]
    pooled = ndimage.uniform_filter(member, size=window, mode="nearest")
    return pooled > 0.5


def binarize(img: GrayImage, method: SegmentationMethod) -> BinaryMask:
    """Segment the image into a vessel mask with the chosen method."""
    if method.name == "global":
        vessel = _global_mean(img)
    elif method.name == "isodata":
        vessel = _isodata(img)
    elif method.name == "kmeans":
        vessel = _kmeans(img)
    elif method.name == "adaptive":
        vessel = _adaptive(img, method.window, method.offset)
    else:
        vessel = _fuzzy(img, method.window)
    return _finish(img, vessel)


def compare_methods(
    img: GrayImage, methods: list[SegmentationMethod], twig_size_um: float | None = None
) -> ComparisonTable:
    """Run several methods on one image; report VAD and CF per method."""
    # imported here: topology/metrics depend on this module's BinaryMask
    from . import metrics, topology

    if len(methods) < 2:
        raise ValueError("need at least 2 methods to compare")
    if twig_size_um is None:
        twig_size_um = 2.0 * img.calibration.pixel_size_um
    rows = []
    for method in methods:
        mask = binarize(img, method)
        skel = topology.skeletonize(mask)
        thick = topology.local_thickness(mask)
        net = topology.extract_network(skel, thick, twig_size_um)
        rows.append(
            ComparisonRow(
                method=method.name,
                vad_percent=metrics.vessel_area_density(mask),
                cf=metrics.connectivity_factor(net),
            )
        )
    return ComparisonTable(rows=rows)
