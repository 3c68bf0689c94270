"""Synthetic validation images with exact analytic ground truth.

Two families: a microfluidic-style grid of straight channels at two known
widths, and a simulated vascular network of non-crossing sinusoidal
vessels with intensity variation along their length. Ground truth (areas,
centerline lengths, widths, tortuosity, junction count) is computed from
the generating geometry, never measured back from the rendered image, so
these serve as end-to-end oracles for the analysis pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .imagecore import Calibration, GrayImage

_SUPERSAMPLE = 4


@dataclass(frozen=True)
class GridPhantomSpec:
    """Tiled grid: one full-height wide channel per tile column, joined by
    staggered narrow rungs across each gap (T junctions only)."""

    size_px: int = 1080
    pixel_size_um: float = 4.0
    small_channel_um: float = 50.0
    large_channel_um: float = 300.0
    smalls_per_tile: int = 6
    tile_count: int = 3
    background_level: float = 0.1
    channel_level: float = 0.85
    noise_stddev: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.tile_count < 2:
            raise ValueError("grid needs at least 2 tile columns to form junctions")
        if self.size_px % self.tile_count != 0:
            raise ValueError("size_px must divide evenly into tiles")
        if self.smalls_per_tile < 1:
            raise ValueError("need at least one small channel per tile")
        for width in (self.small_channel_um, self.large_channel_um):
            if width / self.pixel_size_um < 2.0:
                raise ValueError(f"channel width {width} um is under 2 px")
        if self.small_channel_um >= self.large_channel_um:
            raise ValueError("small channel must be narrower than large channel")
        contrast = self.channel_level - self.background_level
        if contrast <= 5.0 * self.noise_stddev:
            raise ValueError("channel/background contrast must exceed 5x noise stddev")
        if not (0.0 <= self.background_level < self.channel_level <= 1.0):
            raise ValueError("levels must satisfy 0 <= background < channel <= 1")

    @property
    def tile_px(self) -> float:
        return self.size_px / self.tile_count


@dataclass(frozen=True)
class NetworkPhantomSpec:
    """Non-crossing sinusoidal vessels in horizontal bands. Keeping the
    vessels disjoint means every ground-truth quantity has a closed form
    (or a quadrature of the analytic curve); crossings would create
    junction geometry with no exact expectation."""

    size_px: int = 1075
    pixel_size_um: float = 9.3
    seed: int = 0
    vessel_count: int = 14
    diameter_range_um: tuple[float, float] = (50.0, 130.0)
    intensity_amplitude: float = 0.35
    tortuosity_amplitude: float = 0.13
    background_level: float = 0.05
    vessel_level: float = 0.85

    def __post_init__(self):
        if self.vessel_count < 1:
            raise ValueError("need at least one vessel")
        lo, hi = self.diameter_range_um
        if not (0.0 < lo <= hi):
            raise ValueError("diameter range must be positive and ordered")
        if lo / self.pixel_size_um < 2.0:
            raise ValueError("smallest vessel is under 2 px wide")
        if not (0.0 <= self.intensity_amplitude < 1.0):
            raise ValueError("intensity amplitude must be in [0, 1)")
        if self.tortuosity_amplitude < 0.0:
            raise ValueError("tortuosity amplitude cannot be negative")
        if not (0.0 <= self.background_level < self.vessel_level <= 1.0):
            raise ValueError("levels must satisfy 0 <= background < vessel <= 1")


@dataclass(frozen=True)
class TrueElement:
    length_um: float
    width_um: float
    tortuosity: float
    endpoints_yx: tuple[tuple[float, float], tuple[float, float]]

    def as_dict(self) -> dict:
        return {
            "length_um": self.length_um,
            "width_um": self.width_um,
            "tortuosity": self.tortuosity,
            "endpoints_yx": [list(p) for p in self.endpoints_yx],
        }


@dataclass(frozen=True)
class GroundTruth:
    """Analytic expectations for one generated phantom."""

    vad_percent: float
    vld_percent: float
    node_count: int
    node_positions_yx: tuple[tuple[float, float], ...]
    elements: tuple[TrueElement, ...]

    @property
    def total_length_mm(self) -> float:
        return sum(e.length_um for e in self.elements) / 1000.0

    @property
    def median_width_um(self) -> float:
        return float(np.median([e.width_um for e in self.elements]))

    @property
    def mean_tortuosity(self) -> float:
        return float(np.mean([e.tortuosity for e in self.elements]))

    @property
    def branchpoint_density_per_mm(self) -> float:
        return self.node_count / self.total_length_mm

    def as_dict(self) -> dict:
        return {
            "vad_percent": self.vad_percent,
            "vld_percent": self.vld_percent,
            "node_count": self.node_count,
            "node_positions_yx": [list(p) for p in self.node_positions_yx],
            "total_length_mm": self.total_length_mm,
            "median_width_um": self.median_width_um,
            "mean_tortuosity": self.mean_tortuosity,
            "branchpoint_density_per_mm": self.branchpoint_density_per_mm,
            "elements": [e.as_dict() for e in self.elements],
        }


def _spec_from_dict(cls, payload: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(payload) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys {sorted(unknown)}")
    kw = dict(payload)
    if "diameter_range_um" in kw:
        kw["diameter_range_um"] = tuple(kw["diameter_range_um"])
    return cls(**kw)


def grid_spec_from_dict(payload: dict) -> GridPhantomSpec:
    return _spec_from_dict(GridPhantomSpec, payload)


def network_spec_from_dict(payload: dict) -> NetworkPhantomSpec:
    return _spec_from_dict(NetworkPhantomSpec, payload)


def _rect_coverage(size: int, y0: float, y1: float, x0: float, x1: float) -> np.ndarray:
    """Exact per-pixel area fraction covered by an axis-aligned rectangle."""
    idx = np.arange(size, dtype=np.float64)
    rows = np.clip(np.minimum(y1, idx + 1.0) - np.maximum(y0, idx), 0.0, 1.0)
    cols = np.clip(np.minimum(x1, idx + 1.0) - np.maximum(x0, idx), 0.0, 1.0)
    return np.outer(rows, cols)


def _grid_geometry(spec: GridPhantomSpec):
    """Continuous-coordinate rectangles for every channel.

    Large channels sit at half-integer centers so a 75 px design width
    lands exactly on pixel boundaries; rung centers are integers so their
    quarter-covered edge rows binarize away symmetrically. Both choices
    keep the recovered mask widths deterministic.
    """
    s = spec
    large_px = s.large_channel_um / s.pixel_size_um
    small_px = s.small_channel_um / s.pixel_size_um
    tile = s.tile_px

    centers_x = [tile * (j + 0.5) - 0.5 for j in range(s.tile_count)]
    verticals = [(0.0, float(s.size_px), cx - large_px / 2, cx + large_px / 2) for cx in centers_x]

    spacing = tile / s.smalls_per_tile
    if small_px >= spacing:
        raise ValueError("small channels overlap within a tile; reduce smalls_per_tile")
    if large_px >= tile - small_px:
        raise ValueError("large channels leave no room for rungs")
    # thinning erodes a band's free end by roughly half its width, so
    # junctions inside that cap would vanish from the traced network;
    # keep every rung clear of the top and bottom caps
    margin = large_px / 2 + 4
    rungs = []  # (y_center, x_left_center, x_right_center)
    for gap in range(s.tile_count - 1):
        offset = spacing * (0.25 if gap % 2 == 0 else 0.75)
        for tile_row in range(s.tile_count):
            for j in range(s.smalls_per_tile):
                yc = round(tile * tile_row + offset + spacing * j)
                if yc < margin or yc > s.size_px - margin:
                    continue
                rungs.append((float(yc), centers_x[gap], centers_x[gap + 1]))
    return large_px, small_px, centers_x, verticals, rungs


def generate_grid_phantom(spec: GridPhantomSpec) -> tuple[GrayImage, GroundTruth]:
    s = spec
    large_px, small_px, centers_x, verticals, rungs = _grid_geometry(s)

    coverage = np.zeros((s.size_px, s.size_px), dtype=np.float64)
    for y0, y1, x0, x1 in verticals:
        coverage += _rect_coverage(s.size_px, y0, y1, x0, x1)
    for yc, xl, xr in rungs:
        ry0, ry1 = yc - small_px / 2, yc + small_px / 2
        coverage += _rect_coverage(s.size_px, ry0, ry1, xl, xr)
        # subtract the parts of the rung that lie inside each vertical,
        # so union coverage stays exact (no triple overlaps by design)
        for vy0, vy1, vx0, vx1 in verticals:
            ix0, ix1 = max(xl, vx0), min(xr, vx1)
            if ix1 > ix0:
                coverage -= _rect_coverage(s.size_px, ry0, ry1, ix0, ix1)
    coverage = np.clip(coverage, 0.0, 1.0)

    rng = np.random.default_rng(s.seed)
    pixels = s.background_level + (s.channel_level - s.background_level) * coverage
    if s.noise_stddev > 0:
        pixels = pixels + rng.normal(0.0, s.noise_stddev, pixels.shape)
    img = GrayImage(
        pixels=np.clip(pixels, 0.0, 1.0),
        calibration=Calibration(pixel_size_um=s.pixel_size_um),
    )

    ps = s.pixel_size_um
    area_px2 = float(s.size_px) ** 2
    vessel_area = len(verticals) * large_px * s.size_px
    rung_outside = 0.0
    for yc, xl, xr in rungs:
        inside = large_px  # half a vertical body at each end
        rung_outside += (xr - xl - inside) * small_px
    vad = 100.0 * (vessel_area + rung_outside) / area_px2

    centerline_px = len(verticals) * s.size_px + sum(xr - xl for _, xl, xr in rungs)
    vld = 100.0 * centerline_px / area_px2

    nodes = []
    junctions_per_x: dict[float, list[float]] = {cx: [] for cx in centers_x}
    for yc, xl, xr in rungs:
        junctions_per_x[xl].append(yc)
        junctions_per_x[xr].append(yc)
        nodes.append((yc, xl))
        nodes.append((yc, xr))

    elements = []
    for cx in centers_x:
        cuts = [0.0] + sorted(junctions_per_x[cx]) + [float(s.size_px - 1)]
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b <= a:
                continue
            elements.append(
                TrueElement(
                    length_um=(b - a) * ps,
                    width_um=s.large_channel_um,
                    tortuosity=0.0,
                    endpoints_yx=((a, cx), (b, cx)),
                )
            )
    for yc, xl, xr in rungs:
        elements.append(
            TrueElement(
                length_um=(xr - xl) * ps,
                width_um=s.small_channel_um,
                tortuosity=0.0,
                endpoints_yx=((yc, xl), (yc, xr)),
            )
        )

    truth = GroundTruth(
        vad_percent=vad,
        vld_percent=vld,
        node_count=len(nodes),
        node_positions_yx=tuple(sorted(nodes)),
        elements=tuple(elements),
    )
    return img, truth


def _vessel_curves(spec: NetworkPhantomSpec, rng: np.random.Generator):
    """Per-vessel (band_center, amplitude, periods, phase, width_px)."""
    s = spec
    band = s.size_px / s.vessel_count
    w_max_px = s.diameter_range_um[1] / s.pixel_size_um
    curves = []
    for i in range(s.vessel_count):
        width_um = float(rng.uniform(*s.diameter_range_um))
        periods = int(rng.integers(6, 9)) if s.tortuosity_amplitude > 0 else 1
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        amplitude = s.tortuosity_amplitude * s.size_px / periods
        slope_max = 2.0 * np.pi * s.tortuosity_amplitude
        half_extent = amplitude + 0.5 * w_max_px * np.hypot(1.0, slope_max) + 1.0
        if half_extent > band / 2:
            raise ValueError(
                "vessels would overlap their neighbors; lower the tortuosity "
                "amplitude, the diameter range, or the vessel count"
            )
        yc = band * (i + 0.5)
        curves.append((yc, amplitude, periods, phase, width_um / s.pixel_size_um, width_um))
    return curves


def _curve_y(x, yc, amplitude, periods, phase, size):
    return yc + amplitude * np.sin(2.0 * np.pi * periods * x / size + phase)


def _curve_dy(x, yc, amplitude, periods, phase, size):
    k = 2.0 * np.pi * periods / size
    return amplitude * k * np.cos(k * x + phase)


def generate_network_phantom(spec: NetworkPhantomSpec) -> tuple[GrayImage, GroundTruth]:
    s = spec
    rng = np.random.default_rng(s.seed)
    curves = _vessel_curves(s, rng)
    mod_phases = rng.uniform(0.0, 2.0 * np.pi, size=len(curves))

    F = _SUPERSAMPLE
    n = s.size_px * F
    xs = (np.arange(n, dtype=np.float64) + 0.5) / F
    sub_value = np.zeros((n, n), dtype=np.float32)
    sub_cover = np.zeros((n, n), dtype=bool)
    rows = np.arange(n)

    for i, (yc, amp, periods, phase, w_px, _w_um) in enumerate(curves):
        y = _curve_y(xs, yc, amp, periods, phase, s.size_px)
        dy = _curve_dy(xs, yc, amp, periods, phase, s.size_px)
        half = 0.5 * w_px * np.sqrt(1.0 + dy * dy)
        jlo = np.clip(np.ceil(F * (y - half) - 0.5).astype(np.int64), 0, n)
        jhi = np.clip(np.floor(F * (y + half) - 0.5).astype(np.int64) + 1, 0, n)
        lo, hi = int(jlo.min()), int(jhi.max())
        # interval fill via a difference array, restricted to the vessel band
        diff = np.zeros((hi - lo + 1, n), dtype=np.int8)
        cols = np.arange(n)
        keep = jhi > jlo
        diff[jlo[keep] - lo, cols[keep]] += 1
        diff[jhi[keep] - lo, cols[keep]] -= 1
        band = np.cumsum(diff[:-1], axis=0, dtype=np.int8) > 0
        level = s.vessel_level * (
            1.0
            - s.intensity_amplitude
            * (0.5 + 0.5 * np.sin(6.0 * np.pi * xs / s.size_px + mod_phases[i]))
        )
        sub_value[lo:hi][band] = (np.broadcast_to(level, band.shape).astype(np.float32))[band]
        sub_cover[lo:hi] |= band

    def down(a):
        return a.reshape(s.size_px, F, s.size_px, F).mean(axis=(1, 3))

    cover = down(sub_cover.astype(np.float32)).astype(np.float64)
    value = down(sub_value).astype(np.float64)
    pixels = s.background_level * (1.0 - cover) + value
    img = GrayImage(
        pixels=np.clip(pixels, 0.0, 1.0),
        calibration=Calibration(pixel_size_um=s.pixel_size_um),
    )

    # ground truth from the analytic curves: ribbon area equals width
    # times arc length, per-column extent compensation being exact for a
    # constant-width band around a differentiable centerline
    xq = np.linspace(0.0, float(s.size_px), 8193)
    elements = []
    total_area_px2 = 0.0
    total_cheb_px = 0.0
    for yc, amp, periods, phase, w_px, w_um in curves:
        dy = _curve_dy(xq, yc, amp, periods, phase, s.size_px)
        arc_px = float(np.trapezoid(np.sqrt(1.0 + dy * dy), xq))
        y_start = float(_curve_y(0.0, yc, amp, periods, phase, s.size_px))
        y_end = float(_curve_y(float(s.size_px), yc, amp, periods, phase, s.size_px))
        chord_px = float(np.hypot(float(s.size_px), y_end - y_start))
        if chord_px <= 0.0:
            raise ValueError("degenerate zero-length vessel")
        elements.append(
            TrueElement(
                length_um=arc_px * s.pixel_size_um,
                width_um=w_um,
                tortuosity=arc_px / chord_px - 1.0,
                endpoints_yx=((y_start, 0.0), (y_end, float(s.size_px))),
            )
        )
        total_area_px2 += w_px * arc_px
        # the skeleton-pixel count behind VLD follows the Chebyshev length
        # of the centerline: an 8-connected digitization takes one pixel
        # per unit of max(|dx|, |dy|) along the curve
        total_cheb_px += float(np.trapezoid(np.maximum(1.0, np.abs(dy)), xq))

    area_px2 = float(s.size_px) ** 2
    truth = GroundTruth(
        vad_percent=100.0 * total_area_px2 / area_px2,
        vld_percent=100.0 * total_cheb_px / area_px2,
        node_count=0,
        node_positions_yx=(),
        elements=tuple(elements),
    )
    return img, truth
