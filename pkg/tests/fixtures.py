"""Synthetic image builders shared by the test modules."""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def bimodal_image(seed: int, shape=(96, 96)) -> np.ndarray:
    """Blobby foreground over dim background, two well-separated
    intensity modes. Used for threshold-method fixtures."""
    rng = np.random.default_rng(seed)
    blobs = ndimage.gaussian_filter(rng.random(shape), 6.0)
    fg = blobs > np.percentile(blobs, 65)
    img = rng.normal(0.3, 0.04, shape)
    img[fg] = rng.normal(0.7, 0.05, fg.sum())
    return np.clip(img, 0.0, 1.0)


def random_blob_mask(seed: int, shape=(64, 64), frac: float = 0.45) -> np.ndarray:
    """Smooth random foreground blobs covering roughly ``frac`` of the
    frame. Used for skeleton and thickness fixtures."""
    rng = np.random.default_rng(seed)
    smooth = ndimage.gaussian_filter(rng.random(shape), 4.0)
    return smooth > np.percentile(smooth, 100 * (1 - frac))


def two_level_image(seed: int, shape=(64, 64), lo: float = 0.2, hi: float = 0.8) -> np.ndarray:
    """Exactly two intensity values with a random spatial layout."""
    rng = np.random.default_rng(seed)
    return np.where(rng.random(shape) < 0.4, hi, lo)


def raster_semicircle(radius: int, margin: int = 11) -> np.ndarray:
    """One-pixel-wide 8-connected digital semicircular arc.

    Walks the upper half of a circle of the given radius, stepping to the
    8-neighbor nearest the ideal curve, so the result is a minimal digital
    arc with both endpoints on the diameter. Returns a boolean frame.
    """
    size = 2 * radius + 2 * margin - 1
    cy, cx = size - margin, size // 2
    bits = np.zeros((size, size), dtype=bool)
    y, x = 0, -radius
    bits[cy + y, cx + x] = True
    theta = np.pi
    while theta > 0:
        theta = max(0.0, theta - 0.5 / radius)
        ty, tx = -radius * np.sin(theta), radius * np.cos(theta)
        best = None
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                d = (y + dy - ty) ** 2 + (x + dx - tx) ** 2
                if best is None or d < best[0]:
                    best = (d, y + dy, x + dx)
        y, x = best[1], best[2]
        bits[cy + y, cx + x] = True
    return bits
