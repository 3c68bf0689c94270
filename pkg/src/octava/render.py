"""Raster views of an analysis: network overlay, thickness heatmap,
histogram figures, and the element-geometry payload used by interactive
clients for hit-testing.

All renderers are pure functions of their inputs and produce identical
bytes for identical inputs, so artifact files can double as cache keys.
"""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib
import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .imagecore import GrayImage
from .metrics import MetricsReport
from .topology import ThicknessMap, VesselNetwork

CLASS_COLORS = {
    "segment": (247, 214, 56),
    "branch": (80, 200, 120),
    "isolated": (40, 60, 170),
}
MESH_COLOR = (0, 230, 230)
NODE_COLOR = (235, 60, 60)
CURATED_COLOR = (110, 110, 110)

_COLORMAP = "inferno"
_BAR_WIDTH = 24
_PANEL_WIDTH = 96
_TICKS = 5


def _path_mask(shape: tuple[int, int], elements) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    for e in elements:
        m[e.path[:, 0], e.path[:, 1]] = True
    return m


def _draw_layer(rgb: np.ndarray, mask: np.ndarray, color: tuple[int, int, int]) -> None:
    fat = ndimage.binary_dilation(mask, structure=np.ones((3, 3), dtype=bool))
    rgb[fat] = color


def render_overlay(image: GrayImage, net: VesselNetwork) -> np.ndarray:
    """Classified centerlines, mesh outlines and node markers over the
    source image; returns an (H, W, 3) uint8 array.

    Curated-out elements stay visible in neutral gray so an operator can
    see what the edits removed. Nodes get a single marker style.
    """
    if image.pixels.shape != net.shape:
        raise ValueError(
            f"image shape {image.pixels.shape} does not match network shape {net.shape}"
        )
    base = np.round(image.pixels * 255.0).astype(np.uint8)
    rgb = np.repeat(base[:, :, None], 3, axis=2)

    mesh_mask = net.mesh_labels > 0
    if mesh_mask.any():
        outline = mesh_mask & ~ndimage.binary_erosion(mesh_mask)
        rgb[outline] = MESH_COLOR

    by_class = {"isolated": [], "branch": [], "segment": []}
    curated = []
    for e in net.elements:
        if e.suppressed:
            continue
        (curated if e.curated_out else by_class[e.element_class]).append(e)
    _draw_layer(rgb, _path_mask(net.shape, curated), CURATED_COLOR)
    for cls in ("isolated", "branch", "segment"):
        _draw_layer(rgb, _path_mask(net.shape, by_class[cls]), CLASS_COLORS[cls])

    pil = Image.fromarray(rgb)
    draw = ImageDraw.Draw(pil)
    px = image.calibration.pixel_size_um
    for node in net.nodes:
        y, x = node.centroid_yx
        r = max(node.diameter_um / (2.0 * px), 3.0)
        draw.ellipse([x - r, y - r, x + r, y + r], outline=NODE_COLOR, width=2)
    return np.asarray(pil)


def _mpl_font(size: int) -> ImageFont.FreeTypeFont:
    ttf = Path(matplotlib.get_data_path()) / "fonts" / "ttf" / "DejaVuSans.ttf"
    return ImageFont.truetype(str(ttf), size)


def render_thickness(thick: ThicknessMap) -> np.ndarray:
    """Thickness heatmap with a labeled color bar, as (H, W', 3) uint8.

    Background (zero thickness) maps to the bottom of the color scale;
    the bar on the right is annotated in um from zero to the image
    maximum.
    """
    values = thick.values_um
    vmax = float(values.max())
    if vmax <= 0.0:
        raise ValueError("thickness map is empty; nothing to render")
    lut = (plt.get_cmap(_COLORMAP)(np.linspace(0.0, 1.0, 256))[:, :3] * 255).astype(np.uint8)
    idx = np.round(values / vmax * 255.0).astype(np.uint8)
    heat = lut[idx]

    h = heat.shape[0]
    panel = np.zeros((h, _PANEL_WIDTH, 3), dtype=np.uint8)
    pad = max(h // 20, 8)
    bar_rows = np.arange(pad, h - pad)
    # top of the bar is vmax, bottom is zero
    frac = 1.0 - (bar_rows - pad) / max(len(bar_rows) - 1, 1)
    panel[bar_rows, 8 : 8 + _BAR_WIDTH] = lut[np.round(frac * 255.0).astype(np.uint8)][:, None, :]

    pil = Image.fromarray(np.concatenate([heat, panel], axis=1))
    draw = ImageDraw.Draw(pil)
    font = _mpl_font(max(min(h // 40, 16), 8))
    x_text = heat.shape[1] + 8 + _BAR_WIDTH + 4
    for t in range(_TICKS):
        f = t / (_TICKS - 1)
        y = pad + (1.0 - f) * (len(bar_rows) - 1)
        draw.text((x_text, y), f"{f * vmax:.0f}", fill=(255, 255, 255), font=font, anchor="lm")
    draw.text((heat.shape[1] + 8, max(pad - 4, 0)), "μm",
              fill=(255, 255, 255), font=font, anchor="lb")
    return np.asarray(pil)


def render_histogram_figure(report: MetricsReport) -> bytes:
    """Bar charts of the diameter, length and tortuosity distributions,
    returned as PNG bytes."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2), dpi=110)
    panels = [
        ("diameter", "Diameter (μm)", report.diameter_histogram),
        ("length", "Length (mm)", report.length_histogram),
        ("tortuosity", "Tortuosity", report.tortuosity_histogram),
    ]
    for ax, (title, xlabel, hist) in zip(axes, panels):
        centers = hist.centers
        width = (hist.edges[1] - hist.edges[0]) * 0.9 if len(hist.edges) > 1 else 1.0
        ax.bar(centers, hist.counts, width=width, color="#3b6ea5")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png")
    plt.close(fig)
    return buf.getvalue()


def save_png(rgb: np.ndarray, path: str | Path) -> None:
    Image.fromarray(rgb).save(Path(path), format="PNG")


def png_bytes(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, format="PNG")
    return buf.getvalue()


def network_geometry(net: VesselNetwork) -> dict:
    """Vector description of the network for client-side hit-testing and
    styling: element paths with class and measurements, node markers,
    mesh centroids, and the frame size."""
    elements = []
    for e in net.elements:
        tort = e.tortuosity()
        elements.append(
            {
                "id": e.id,
                "class": e.element_class,
                "path": e.path.tolist(),
                "arc_length_um": e.arc_length_um,
                "mean_diameter_um": e.mean_diameter_um,
                "tortuosity": tort,
                "is_loop": e.is_loop,
                "suppressed": e.suppressed,
                "curated_out": e.curated_out,
            }
        )
    nodes = [
        {
            "id": n.id,
            "centroid_yx": [n.centroid_yx[0], n.centroid_yx[1]],
            "diameter_um": n.diameter_um,
        }
        for n in net.nodes
    ]
    meshes = [
        {"id": m.id, "area_um2": m.area_um2, "centroid_yx": [m.centroid_yx[0], m.centroid_yx[1]]}
        for m in net.meshes
    ]
    return {
        "shape": [net.shape[0], net.shape[1]],
        "pixel_size_um": net.calibration.pixel_size_um,
        "elements": elements,
        "nodes": nodes,
        "meshes": meshes,
    }
