// DOM wiring. All state lives in SessionView; this file only moves
// values between the view model and the page.

import { ApiClient, ApiError } from "./api.js";
import {
  fitTransform,
  pan,
  zoomAt,
  type Point,
  type ViewTransform,
} from "./geometry.js";
import { curatedWithinAuto, fwhm, ghostBarModel } from "./histogram.js";
import { buildDrawPlan, renderPlan, CLASS_COLORS } from "./overlay.js";
import type { ProfileSpec, ReportMetrics } from "./types.js";
import {
  LAYERS,
  paramsToOverrides,
  SessionView,
  validateParams,
  type Layer,
  type PanelParams,
} from "./viewstate.js";

const apiBase =
  new URLSearchParams(location.search).get("api") ?? "http://127.0.0.1:8000";
const api = new ApiClient(apiBase);

let view: SessionView | null = null;
let transform: ViewTransform = { scale: 1, tx: 0, ty: 0 };
let layerImage: HTMLImageElement | null = null;
let profileLine: ProfileSpec | null = null;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("view-canvas");
const ctx = canvas.getContext("2d")!;
const histCanvas = $<HTMLCanvasElement>("hist-canvas");
const profileCanvas = $<HTMLCanvasElement>("profile-canvas");

const METRIC_ROWS: [keyof ReportMetrics, string][] = [
  ["vad_percent", "VAD %"],
  ["vld_percent", "VLD %"],
  ["mean_diameter_um", "mean diameter um"],
  ["median_diameter_um", "median diameter um"],
  ["total_vessel_length_mm", "total length mm"],
  ["mean_tortuosity", "mean tortuosity"],
  ["branchpoint_density_per_mm", "branchpoints /mm"],
  ["fractal_dimension", "fractal dimension"],
  ["cf", "connectivity factor"],
];

function readParams(): PanelParams {
  const method = $<HTMLSelectElement>("p-method").value;
  return {
    median_kernel: Number($<HTMLInputElement>("p-median").value),
    frangi_enabled: $<HTMLInputElement>("p-frangi").checked,
    sigma_max: Number($<HTMLInputElement>("p-sigma").value),
    method,
    window: method === "adaptive" ? Number($<HTMLInputElement>("p-window").value) : null,
    offset: method === "adaptive" ? Number($<HTMLInputElement>("p-offset").value) : 0,
    twig_size_um:
      $<HTMLInputElement>("p-twig").value === ""
        ? null
        : Number($<HTMLInputElement>("p-twig").value),
  };
}

function refreshParamErrors(): void {
  const errors = validateParams(readParams());
  $("param-errors").textContent = errors.join("; ");
  $<HTMLButtonElement>("analyze-btn").disabled = view === null || errors.length > 0;
}

function setBusyUi(): void {
  const busy = view?.busy ?? false;
  const analyzed = view?.analyzed ?? false;
  $<HTMLButtonElement>("sweep-btn").disabled = busy || view === null;
  const el = view?.selectedElement() ?? null;
  $<HTMLButtonElement>("remove-btn").disabled = busy || !el || el.curated_out;
  $<HTMLButtonElement>("restore-btn").disabled = busy || !el || !el.curated_out;
  $<HTMLButtonElement>("undo-btn").disabled = busy || !analyzed || !(view?.canUndo() ?? false);
  $("conflict-banner").hidden = !(view?.conflict ?? false);
}

function loadLayer(): void {
  if (!view?.artifacts) {
    layerImage = null;
    drawViewer();
    return;
  }
  const url = view.artifacts[view.layer];
  if (!url) return;
  const img = new Image();
  img.crossOrigin = "anonymous";
  img.onload = () => {
    const first = layerImage === null;
    layerImage = img;
    if (first) {
      transform = fitTransform(img.width, img.height, canvas.width, canvas.height);
    }
    drawViewer();
  };
  img.src = `${apiBase}${url}`;
}

function drawViewer(): void {
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (layerImage) {
    ctx.save();
    ctx.imageSmoothingEnabled = transform.scale < 1;
    ctx.setTransform(transform.scale, 0, 0, transform.scale, transform.tx, transform.ty);
    ctx.drawImage(layerImage, 0, 0);
    ctx.restore();
  }
  if (view?.geometry && view.layer === "overlay") {
    renderPlan(ctx, buildDrawPlan(view.geometry, view.selectedId), transform);
  }
  if (profileLine) {
    ctx.save();
    ctx.strokeStyle = "#ff8c00";
    ctx.lineWidth = 2;
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    const a = { x: profileLine.x0, y: profileLine.y0 };
    const b = { x: profileLine.x1, y: profileLine.y1 };
    const ca = { x: a.x * transform.scale + transform.tx, y: a.y * transform.scale + transform.ty };
    const cb = { x: b.x * transform.scale + transform.tx, y: b.y * transform.scale + transform.ty };
    ctx.moveTo(ca.x, ca.y);
    ctx.lineTo(cb.x, cb.y);
    ctx.stroke();
    ctx.restore();
  }
}

function drawMetrics(): void {
  const tbody = document.querySelector("#metrics-table tbody")!;
  tbody.innerHTML = "";
  if (!view?.report) return;
  const cur = view.report.metrics;
  const auto = view.autoReport?.metrics ?? cur;
  for (const [key, label] of METRIC_ROWS) {
    const tr = document.createElement("tr");
    const a = auto[key] as number;
    const c = cur[key] as number;
    tr.innerHTML = `<td>${label}</td><td>${a.toFixed(3)}</td><td>${c.toFixed(3)}</td>`;
    if (Math.abs(a - c) > 1e-12) tr.classList.add("changed");
    tbody.appendChild(tr);
  }
  $("warnings").textContent = (view.report.warnings ?? []).join(" | ");
}

function drawHistogram(): void {
  const g = histCanvas.getContext("2d")!;
  g.clearRect(0, 0, histCanvas.width, histCanvas.height);
  if (!view?.histograms) return;
  const bars = ghostBarModel(
    view.histograms.auto.diameter_um,
    view.histograms.current.diameter_um,
  );
  const peak = Math.max(1, ...bars.map((b) => b.auto));
  const w = histCanvas.width / bars.length;
  const h = histCanvas.height - 14;
  bars.forEach((b, i) => {
    // ghost bar: the automatic count, always visible behind the current
    g.fillStyle = "#c8c8c8";
    g.fillRect(i * w, h - (b.auto / peak) * h, w - 1, (b.auto / peak) * h);
    g.fillStyle = curatedWithinAuto([b]) ? "#3b6ea5" : "#c03030";
    g.fillRect(i * w, h - (b.current / peak) * h, w - 1, (b.current / peak) * h);
  });
  g.fillStyle = "#444";
  g.font = "10px sans-serif";
  g.fillText("0", 2, histCanvas.height - 3);
  const last = bars[bars.length - 1];
  g.fillText(`${last.hi} um`, histCanvas.width - 48, histCanvas.height - 3);
}

function drawElementInfo(): void {
  const el = view?.selectedElement() ?? null;
  const box = $("element-info");
  if (!el) {
    box.textContent = view?.analyzed ? "click the overlay to select" : "no analysis yet";
    return;
  }
  const tort = el.tortuosity === null ? "loop" : el.tortuosity.toFixed(4);
  box.innerHTML =
    `<b style="color:${CLASS_COLORS[el.class]}">#${el.id} ${el.class}</b><br>` +
    `length ${el.arc_length_um.toFixed(1)} um<br>` +
    `diameter ${el.mean_diameter_um.toFixed(1)} um<br>` +
    `tortuosity ${tort}` +
    (el.suppressed ? "<br>suppressed (twig)" : "") +
    (el.curated_out ? "<br><i>curated out</i>" : "");
}

function redrawAll(): void {
  drawViewer();
  drawMetrics();
  drawHistogram();
  drawElementInfo();
  setBusyUi();
  if (view?.analyzed) {
    const link = $<HTMLAnchorElement>("export-link");
    link.href = api.exportUrl(view.sessionId);
    link.hidden = false;
  }
}

async function guarded(work: () => Promise<void>): Promise<void> {
  try {
    await work();
  } catch (err) {
    if (err instanceof ApiError) {
      $("warnings").textContent = `server: ${err.message}`;
    } else {
      $("warnings").textContent = String(err);
    }
  } finally {
    redrawAll();
  }
}

$<HTMLFormElement>("upload-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const input = $<HTMLInputElement>("file-input");
  const file = input.files?.[0];
  if (!file) return;
  void guarded(async () => {
    const id = await api.createSession(file, file.name, Number($<HTMLInputElement>("pixel-size").value));
    view = new SessionView(api, id);
    await view.refresh();
    $("session-label").textContent = `session ${id.slice(0, 8)}`;
    layerImage = null;
    profileLine = null;
    refreshParamErrors();
  });
});

$<HTMLButtonElement>("analyze-btn").addEventListener("click", () => {
  if (!view) return;
  const params = readParams();
  if (validateParams(params).length > 0) return;
  void guarded(async () => {
    await view!.analyze(paramsToOverrides(params));
    layerImage = null;
    loadLayer();
  });
});

for (const id of ["p-median", "p-frangi", "p-sigma", "p-method", "p-window", "p-offset", "p-twig"]) {
  $(id).addEventListener("input", () => {
    const adaptive = $<HTMLSelectElement>("p-method").value === "adaptive";
    document.querySelectorAll<HTMLElement>(".adaptive-only").forEach((el) => {
      el.style.display = adaptive ? "" : "none";
    });
    refreshParamErrors();
  });
}

document.querySelectorAll<HTMLButtonElement>("#layer-tabs button").forEach((btn) => {
  btn.addEventListener("click", () => {
    const layer = btn.dataset.layer as Layer;
    if (!LAYERS.includes(layer) || !view) return;
    view.setLayer(layer);
    document.querySelectorAll("#layer-tabs button").forEach((b) => b.classList.remove("active"));
    btn.classList.add("active");
    loadLayer();
  });
});

let dragging = false;
let profiling = false;
let lastPos: Point = { x: 0, y: 0 };
let moved = false;

canvas.addEventListener("mousedown", (ev) => {
  lastPos = { x: ev.offsetX, y: ev.offsetY };
  moved = false;
  if (ev.shiftKey) {
    profiling = true;
    const p = { x: (ev.offsetX - transform.tx) / transform.scale, y: (ev.offsetY - transform.ty) / transform.scale };
    profileLine = { y0: p.y, x0: p.x, y1: p.y, x1: p.x };
  } else {
    dragging = true;
  }
});

canvas.addEventListener("mousemove", (ev) => {
  const pos = { x: ev.offsetX, y: ev.offsetY };
  if (profiling && profileLine) {
    profileLine.x1 = (pos.x - transform.tx) / transform.scale;
    profileLine.y1 = (pos.y - transform.ty) / transform.scale;
    drawViewer();
  } else if (dragging) {
    if (Math.hypot(pos.x - lastPos.x, pos.y - lastPos.y) > 2) moved = true;
    transform = pan(transform, pos.x - lastPos.x, pos.y - lastPos.y);
    lastPos = pos;
    drawViewer();
  }
});

window.addEventListener("mouseup", (ev) => {
  if (profiling) {
    profiling = false;
    drawViewer();
    return;
  }
  if (dragging) {
    dragging = false;
    if (!moved && view && ev.target === canvas) {
      view.clickAt({ x: ev.offsetX, y: ev.offsetY }, transform);
      redrawAll();
    }
  }
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  transform = zoomAt(transform, { x: ev.offsetX, y: ev.offsetY }, ev.deltaY < 0 ? 1.15 : 1 / 1.15);
  drawViewer();
});

$<HTMLButtonElement>("remove-btn").addEventListener("click", () => {
  void guarded(() => view!.removeSelected());
});
$<HTMLButtonElement>("restore-btn").addEventListener("click", () => {
  const id = view?.selectedId;
  if (id == null) return;
  void guarded(() => view!.restore(id));
});
$<HTMLButtonElement>("undo-btn").addEventListener("click", () => {
  void guarded(() => view!.undo());
});
$<HTMLButtonElement>("conflict-refresh").addEventListener("click", () => {
  void guarded(async () => {
    await view!.refresh();
    layerImage = null;
    loadLayer();
  });
});

$<HTMLButtonElement>("sweep-btn").addEventListener("click", () => {
  if (!view) return;
  const sigmas = $<HTMLInputElement>("sweep-sigmas")
    .value.split(",")
    .map((s) => Number(s.trim()))
    .filter((s) => Number.isFinite(s) && s >= 1);
  if (sigmas.length === 0) return;
  void guarded(async () => {
    const resp = await api.preview(view!.sessionId, sigmas, profileLine ?? undefined);
    const strip = $("sweep-strip");
    strip.innerHTML = "";
    $("sweep-title").hidden = false;
    for (const entry of resp.previews) {
      const fig = document.createElement("figure");
      const img = document.createElement("img");
      img.src = `data:image/png;base64,${entry.mask_png}`;
      const cap = document.createElement("figcaption");
      cap.textContent = `sigma_max ${entry.sigma_max}`;
      fig.append(img, cap);
      strip.appendChild(fig);
    }
    drawProfiles(resp.previews, resp.source_profile);
  });
});

function drawProfiles(
  previews: { sigma_max: number; profile?: number[] }[],
  source?: number[],
): void {
  const withProfiles = previews.filter((p) => p.profile && p.profile.length > 1);
  if (withProfiles.length === 0 && !source) {
    profileCanvas.hidden = true;
    $("profile-fwhm").textContent = "";
    return;
  }
  profileCanvas.hidden = false;
  const g = profileCanvas.getContext("2d")!;
  g.clearRect(0, 0, profileCanvas.width, profileCanvas.height);
  const palette = ["#3b6ea5", "#c07830", "#3c9a50", "#a040c0", "#888"];
  const series: { label: string; values: number[]; color: string }[] = [];
  if (source) series.push({ label: "source", values: source, color: "#999" });
  withProfiles.forEach((p, i) => {
    series.push({
      label: `sigma ${p.sigma_max}`,
      values: p.profile!,
      color: palette[i % palette.length],
    });
  });
  const n = Math.max(...series.map((s) => s.values.length));
  const peak = Math.max(...series.flatMap((s) => s.values), 1e-9);
  for (const s of series) {
    g.strokeStyle = s.color;
    g.beginPath();
    s.values.forEach((v, i) => {
      const x = (i / (n - 1)) * profileCanvas.width;
      const y = profileCanvas.height - (v / peak) * (profileCanvas.height - 8) - 4;
      if (i === 0) g.moveTo(x, y);
      else g.lineTo(x, y);
    });
    g.stroke();
  }
  const notes = series
    .map((s) => {
      const width = fwhm(s.values);
      return width === null ? `${s.label}: flat` : `${s.label}: FWHM ${width.toFixed(1)} px`;
    })
    .join(" | ");
  $("profile-fwhm").textContent = notes;
}

refreshParamErrors();
setBusyUi();
