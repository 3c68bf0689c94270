// Client-side decoration of the server-rendered layers: selection
// highlight, curated-out dimming, and node markers. The raster layers
// themselves (overlay, thickness, ...) always come from the server; the
// canvas draws them as images and strokes vectors on top.

import { imageToCanvas, type ViewTransform } from "./geometry.js";
import type { ElementClass, Geometry } from "./types.js";

// Same palette as the server overlay: yellow segments, green branches,
// dark-blue isolated fragments, cyan mesh outlines, red node circles.
export const CLASS_COLORS: Record<ElementClass, string> = {
  segment: "#f7d638",
  branch: "#50c878",
  isolated: "#283caa",
};
export const MESH_COLOR = "#00e6e6";
export const NODE_COLOR = "#eb3c3c";
export const SELECT_COLOR = "#ffffff";

export interface PathCommand {
  kind: "path";
  elementId: number;
  points: [number, number][]; // [y, x] image px
  closed: boolean;
  color: string;
  width: number;
  alpha: number;
  dash: number[];
}

export interface CircleCommand {
  kind: "circle";
  cy: number;
  cx: number;
  radiusPx: number;
  color: string;
  width: number;
}

export type DrawCommand = PathCommand | CircleCommand;

/**
 * Vector decorations for the current state. Curated-out elements are
 * dimmed and dashed so removals stay visible; the selected element gets
 * a white halo under its class-colored core.
 */
export function buildDrawPlan(geometry: Geometry, selectedId: number | null): DrawCommand[] {
  const plan: DrawCommand[] = [];
  for (const el of geometry.elements) {
    if (el.curated_out) {
      plan.push({
        kind: "path",
        elementId: el.id,
        points: el.path,
        closed: el.is_loop,
        color: CLASS_COLORS[el.class],
        width: 2,
        alpha: 0.35,
        dash: [5, 4],
      });
    }
    if (el.id === selectedId) {
      plan.push({
        kind: "path",
        elementId: el.id,
        points: el.path,
        closed: el.is_loop,
        color: SELECT_COLOR,
        width: 5,
        alpha: 0.9,
        dash: [],
      });
      plan.push({
        kind: "path",
        elementId: el.id,
        points: el.path,
        closed: el.is_loop,
        color: CLASS_COLORS[el.class],
        width: 2.5,
        alpha: 1,
        dash: el.curated_out ? [5, 4] : [],
      });
    }
  }
  for (const n of geometry.nodes) {
    plan.push({
      kind: "circle",
      cy: n.centroid_yx[0],
      cx: n.centroid_yx[1],
      radiusPx: Math.max(n.diameter_um / (2 * geometry.pixel_size_um), 3),
      color: NODE_COLOR,
      width: 1.5,
    });
  }
  return plan;
}

export function renderPlan(
  ctx: CanvasRenderingContext2D,
  plan: DrawCommand[],
  t: ViewTransform,
): void {
  for (const cmd of plan) {
    ctx.save();
    if (cmd.kind === "path") {
      ctx.globalAlpha = cmd.alpha;
      ctx.strokeStyle = cmd.color;
      ctx.lineWidth = cmd.width;
      ctx.setLineDash(cmd.dash);
      ctx.lineJoin = "round";
      ctx.beginPath();
      cmd.points.forEach(([y, x], i) => {
        const p = imageToCanvas(t, { x, y });
        if (i === 0) ctx.moveTo(p.x, p.y);
        else ctx.lineTo(p.x, p.y);
      });
      if (cmd.closed) ctx.closePath();
      ctx.stroke();
    } else {
      ctx.strokeStyle = cmd.color;
      ctx.lineWidth = cmd.width;
      const c = imageToCanvas(t, { x: cmd.cx, y: cmd.cy });
      ctx.beginPath();
      ctx.arc(c.x, c.y, cmd.radiusPx * t.scale, 0, 2 * Math.PI);
      ctx.stroke();
    }
    ctx.restore();
  }
}
