// Hit-testing against the server's vector geometry, and the zoom/pan
// transform between canvas and image pixel coordinates. All pure math so
// it can run (and be tested) outside a browser.

import type { Geometry, GeometryElement } from "./types.js";

export interface Point {
  x: number;
  y: number;
}

export interface ViewTransform {
  scale: number;
  tx: number;
  ty: number;
}

export function imageToCanvas(t: ViewTransform, p: Point): Point {
  return { x: p.x * t.scale + t.tx, y: p.y * t.scale + t.ty };
}

export function canvasToImage(t: ViewTransform, p: Point): Point {
  return { x: (p.x - t.tx) / t.scale, y: (p.y - t.ty) / t.scale };
}

/** Initial transform: image centered and fully visible in the canvas. */
export function fitTransform(
  imageW: number,
  imageH: number,
  canvasW: number,
  canvasH: number,
): ViewTransform {
  const scale = Math.min(canvasW / imageW, canvasH / imageH);
  return {
    scale,
    tx: (canvasW - imageW * scale) / 2,
    ty: (canvasH - imageH * scale) / 2,
  };
}

/** Zoom by `factor` keeping the canvas point `anchor` fixed. */
export function zoomAt(
  t: ViewTransform,
  anchor: Point,
  factor: number,
  minScale = 0.1,
  maxScale = 40,
): ViewTransform {
  const scale = Math.min(maxScale, Math.max(minScale, t.scale * factor));
  const applied = scale / t.scale;
  return {
    scale,
    tx: anchor.x - (anchor.x - t.tx) * applied,
    ty: anchor.y - (anchor.y - t.ty) * applied,
  };
}

export function pan(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { scale: t.scale, tx: t.tx + dx, ty: t.ty + dy };
}

function distToSegment(p: Point, a: Point, b: Point): number {
  const vx = b.x - a.x;
  const vy = b.y - a.y;
  const len2 = vx * vx + vy * vy;
  let u = 0;
  if (len2 > 0) {
    u = ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2;
    u = Math.max(0, Math.min(1, u));
  }
  const cx = a.x + u * vx;
  const cy = a.y + u * vy;
  return Math.hypot(p.x - cx, p.y - cy);
}

/** Distance in image pixels from a point to an element's centerline. */
export function elementHitDistance(el: GeometryElement, p: Point): number {
  const path = el.path;
  if (path.length === 1) {
    return Math.hypot(p.x - path[0][1], p.y - path[0][0]);
  }
  let best = Infinity;
  for (let i = 0; i + 1 < path.length; i++) {
    const a = { x: path[i][1], y: path[i][0] };
    const b = { x: path[i + 1][1], y: path[i + 1][0] };
    const d = distToSegment(p, a, b);
    if (d < best) best = d;
  }
  if (el.is_loop && path.length > 2) {
    const a = { x: path[path.length - 1][1], y: path[path.length - 1][0] };
    const b = { x: path[0][1], y: path[0][0] };
    best = Math.min(best, distToSegment(p, a, b));
  }
  return best;
}

export interface ElementHit {
  id: number;
  distance: number;
}

/**
 * Closest element whose centerline lies within `tolerancePx` of the
 * image-space point, or null for a background click. Curated-out
 * elements stay clickable (that is how they get restored); suppressed
 * twigs do too, they are simply excluded from statistics server-side.
 */
export function hitTestElement(
  geometry: Geometry,
  p: Point,
  tolerancePx = 6,
): ElementHit | null {
  let best: ElementHit | null = null;
  for (const el of geometry.elements) {
    const d = elementHitDistance(el, p);
    if (d <= tolerancePx && (best === null || d < best.distance)) {
      best = { id: el.id, distance: d };
    }
  }
  return best;
}

/** Node under the point, if any; radius follows the node's diameter. */
export function hitTestNode(
  geometry: Geometry,
  p: Point,
  minRadiusPx = 4,
): number | null {
  let best: number | null = null;
  let bestD = Infinity;
  for (const n of geometry.nodes) {
    const r = Math.max(n.diameter_um / (2 * geometry.pixel_size_um), minRadiusPx);
    const d = Math.hypot(p.x - n.centroid_yx[1], p.y - n.centroid_yx[0]);
    if (d <= r && d < bestD) {
      best = n.id;
      bestD = d;
    }
  }
  return best;
}
