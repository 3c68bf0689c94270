"""Calibrated 2-D intensity images: file I/O, ROI selection, resampling.

Every image in the pipeline is a :class:`GrayImage`: a float array with
intensities normalized to [0, 1] plus a physical pixel calibration.
Normalizing at load time keeps all downstream thresholds independent of
the source container bit depth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

MIN_SIDE = 16

# PIL modes we accept as single-channel input, with the full-scale value
# used to normalize intensities.
_MODE_SCALE = {"L": 255.0, "I;16": 65535.0, "I": 65535.0, "I;16B": 65535.0}


class ImageFormatError(ValueError):
    """Input file is not a supported single-channel 8/16-bit image."""


@dataclass(frozen=True)
class Calibration:
    """Physical pixel size. ``axial_span_um`` is carried as metadata only."""

    pixel_size_um: float
    axial_span_um: float | None = None

    def __post_init__(self):
        if not (self.pixel_size_um > 0):
            raise ValueError(f"pixel_size_um must be > 0, got {self.pixel_size_um}")


@dataclass(frozen=True)
class GrayImage:
    """Immutable 2-D scalar field with intensities in [0, 1].

    ``area_mask`` restricts the analysis region (circular ROIs): pixels
    outside it are zero and excluded from statistics and density
    denominators. ``None`` means the full frame is the analysis region.
    """

    pixels: np.ndarray
    calibration: Calibration
    area_mask: np.ndarray | None = None

    def __post_init__(self):
        px = np.ascontiguousarray(np.asarray(self.pixels, dtype=np.float64))
        if px.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ValueError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image contains non-finite intensities")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.area_mask is not None:
            am = np.ascontiguousarray(np.asarray(self.area_mask, dtype=bool))
            if am.shape != px.shape:
                raise ValueError("area_mask shape must match pixels")
            am.setflags(write=False)
            object.__setattr__(self, "area_mask", am)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def effective_area_px(self) -> int:
        if self.area_mask is None:
            return self.height * self.width
        return int(self.area_mask.sum())

    def analysis_values(self) -> np.ndarray:
        """Intensities of the analysis region as a flat array."""
        if self.area_mask is None:
            return self.pixels.ravel()
        return self.pixels[self.area_mask]

    def with_pixels(self, pixels: np.ndarray) -> "GrayImage":
        return replace(self, pixels=pixels)


@dataclass(frozen=True)
class RoiSpec:
    """Rectangular or circular region of interest, in pixel coordinates.

    Rectangle: ``(x, y)`` top-left corner plus ``width``/``height``.
    Circle: ``(cx, cy)`` center plus ``radius``; the selection is the
    bounding-box crop with pixels outside the disk set to zero.
    """

    shape: str  # "rectangle" | "circle"
    x: int = 0
    y: int = 0
    width: int = 0
    height: int = 0
    cx: int = 0
    cy: int = 0
    radius: int = 0

    def __post_init__(self):
        if self.shape not in ("rectangle", "circle"):
            raise ValueError(f"unknown ROI shape {self.shape!r}")

    @staticmethod
    def rectangle(x: int, y: int, width: int, height: int) -> "RoiSpec":
        return RoiSpec(shape="rectangle", x=x, y=y, width=width, height=height)

    @staticmethod
    def circle(cx: int, cy: int, radius: int) -> "RoiSpec":
        return RoiSpec(shape="circle", cx=cx, cy=cy, radius=radius)


def load_image(path: str | Path, calibration: Calibration) -> GrayImage:
    """Load a single-channel 8/16-bit PNG or TIFF and normalize to [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode not in _MODE_SCALE:
                raise ImageFormatError(
                    f"{path.name}: unsupported mode {mode!r}; expected single-channel 8/16-bit"
                )
            arr = np.asarray(im, dtype=np.float64)
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"cannot read image {path}: {exc}") from exc
    if arr.size == 0:
        raise ImageFormatError(f"{path.name}: zero-size image")
    arr = np.clip(arr / _MODE_SCALE[mode], 0.0, 1.0)
    return GrayImage(pixels=arr, calibration=calibration)


def save_image(img: GrayImage, path: str | Path, bit_depth: int = 16) -> None:
    """Write as single-channel PNG/TIFF, quantizing to the given bit depth."""
    if bit_depth == 8:
        data = np.round(img.pixels * 255.0).astype(np.uint8)
        pil = Image.fromarray(data, mode="L")
    elif bit_depth == 16:
        data = np.round(img.pixels * 65535.0).astype(np.uint16)
        pil = Image.fromarray(data)
    else:
        raise ValueError("bit_depth must be 8 or 16")
    pil.save(Path(path))


def load_anisotropic(path: str | Path, pixel_size_x_um: float, pixel_size_y_um: float) -> GrayImage:
    """Load an image sampled on an anisotropic grid and resample to the
    finer of the two pitches, so downstream geometry can assume square
    pixels."""
    fine = min(pixel_size_x_um, pixel_size_y_um)
    img = load_image(path, Calibration(pixel_size_um=fine))
    fx = pixel_size_x_um / fine
    fy = pixel_size_y_um / fine
    if fx == 1.0 and fy == 1.0:
        return img
    px = _bilinear(img.pixels, factor_x=fx, factor_y=fy)
    return GrayImage(pixels=px, calibration=img.calibration)


def sidecar_calibration(image_path: str | Path) -> Calibration | None:
    """Read ``<image>.json`` next to the image, if present."""
    p = Path(image_path).with_suffix(".json")
    if not p.exists():
        return None
    payload = json.loads(p.read_text())
    return Calibration(
        pixel_size_um=float(payload["pixel_size_um"]),
        axial_span_um=payload.get("axial_span_um"),
    )


def select_roi(img: GrayImage, roi: RoiSpec) -> GrayImage:
    """Crop to the ROI. Circular ROIs zero pixels outside the disk and
    record the in-disk pixel count as the effective analysis area."""
    if roi.shape == "rectangle":
        x, y, w, h = roi.x, roi.y, roi.width, roi.height
        if w <= 0 or h <= 0:
            raise ValueError("rectangle ROI must have positive extent")
        if x < 0 or y < 0 or x + w > img.width or y + h > img.height:
            raise ValueError("ROI exceeds image bounds")
        return GrayImage(pixels=img.pixels[y : y + h, x : x + w], calibration=img.calibration)

    r = roi.radius
    if r <= 0:
        raise ValueError("circle ROI must have positive radius")
    x0, x1 = roi.cx - r, roi.cx + r
    y0, y1 = roi.cy - r, roi.cy + r
    if x0 < 0 or y0 < 0 or x1 >= img.width or y1 >= img.height:
        raise ValueError("ROI exceeds image bounds")
    crop = np.array(img.pixels[y0 : y1 + 1, x0 : x1 + 1])
    yy, xx = np.mgrid[0 : crop.shape[0], 0 : crop.shape[1]]
    disk = (yy - r) ** 2 + (xx - r) ** 2 <= r * r
    crop[~disk] = 0.0
    return GrayImage(pixels=crop, calibration=img.calibration, area_mask=disk)


def _bilinear(arr: np.ndarray, factor_x: float, factor_y: float) -> np.ndarray:
    """Bilinear resampling with pixel-center alignment and edge clamping.

    Output pixel (i, j) samples the input at ((i+0.5)/fy - 0.5,
    (j+0.5)/fx - 0.5).
    """
    h, w = arr.shape
    oh = int(round(h * factor_y))
    ow = int(round(w * factor_x))
    if oh < 1 or ow < 1:
        raise ValueError("resample factor collapses the image")
    ys = (np.arange(oh) + 0.5) / factor_y - 0.5
    xs = (np.arange(ow) + 0.5) / factor_x - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = arr[np.ix_(y0, x0)] * (1 - wx) + arr[np.ix_(y0, x1)] * wx
    bot = arr[np.ix_(y1, x0)] * (1 - wx) + arr[np.ix_(y1, x1)] * wx
    out = top * (1 - wy) + bot * wy
    return np.clip(out, 0.0, 1.0)


def resample(img: GrayImage, factor: float) -> GrayImage:
    """Resample by a uniform factor; pixel size is divided by the factor."""
    if not (factor > 0):
        raise ValueError(f"resample factor must be > 0, got {factor}")
    if factor == 1.0:
        return img
    out = _bilinear(img.pixels, factor_x=factor, factor_y=factor)
    if out.shape[0] < MIN_SIDE or out.shape[1] < MIN_SIDE:
        raise ValueError(f"resampled image below minimum size {MIN_SIDE}, got {out.shape}")
    cal = Calibration(
        pixel_size_um=img.calibration.pixel_size_um / factor,
        axial_span_um=img.calibration.axial_span_um,
    )
    mask = None
    if img.area_mask is not None:
        mask = _bilinear(img.area_mask.astype(np.float64), factor, factor) >= 0.5
    return GrayImage(pixels=out, calibration=cal, area_mask=mask)
