// Session view model: the single mutable state behind the UI, plus the
// controller that turns user gestures into server calls. Metrics are
// never computed here; every number displayed comes from a response.

import { ApiClient, ApiError } from "./api.js";
import { canvasToImage, hitTestElement, type Point, type ViewTransform } from "./geometry.js";
import type {
  CurationAction,
  Geometry,
  GeometryElement,
  Report,
  ReportHistograms,
} from "./types.js";

export type Layer = "original" | "vesselness" | "mask" | "overlay" | "thickness";

export const LAYERS: Layer[] = ["original", "vesselness", "mask", "overlay", "thickness"];

export const METHOD_NAMES = ["global", "kmeans", "isodata", "adaptive", "fuzzy"];

export interface PanelParams {
  median_kernel: number;
  frangi_enabled: boolean;
  sigma_max: number;
  method: string;
  window: number | null;
  offset: number;
  twig_size_um: number | null;
}

export const DEFAULT_PARAMS: PanelParams = {
  median_kernel: 3,
  frangi_enabled: true,
  sigma_max: 8,
  method: "fuzzy",
  window: null,
  offset: 0,
  twig_size_um: null,
};

/** Client-side mirror of the server's parameter constraints, so the
 * panel can refuse submission instead of bouncing off a 422. */
export function validateParams(p: PanelParams): string[] {
  const errors: string[] = [];
  if (!Number.isInteger(p.median_kernel) || p.median_kernel < 1 || p.median_kernel % 2 === 0) {
    errors.push("median kernel must be an odd integer >= 1");
  }
  if (p.frangi_enabled && !(p.sigma_max >= 1)) {
    errors.push("sigma_max must be >= 1");
  }
  if (!METHOD_NAMES.includes(p.method)) {
    errors.push(`unknown method "${p.method}"`);
  }
  if (p.method === "adaptive") {
    if (p.window === null || !Number.isInteger(p.window) || p.window < 3 || p.window % 2 === 0) {
      errors.push("adaptive needs an odd window >= 3");
    }
  }
  if (p.twig_size_um !== null && !(p.twig_size_um >= 0)) {
    errors.push("twig size must be >= 0");
  }
  return errors;
}

/** Panel state -> analyze-request override object. */
export function paramsToOverrides(p: PanelParams): Record<string, unknown> {
  const overrides: Record<string, unknown> = {
    median_kernel: p.median_kernel,
    method: { name: p.method, window: p.window, offset: p.offset },
    twig_size_um: p.twig_size_um,
  };
  overrides.frangi = p.frangi_enabled ? { sigma_max: p.sigma_max } : null;
  return overrides;
}

export interface SessionSnapshot {
  sessionId: string;
  epoch: number;
  analyzed: boolean;
  layer: Layer;
  selectedId: number | null;
  busy: boolean;
  /** Set when the server rejected an edit as stale; the UI must
   * re-analyze or refresh before further curation. */
  conflict: boolean;
  report: Report | null;
  autoReport: Report | null;
  histograms: { auto: ReportHistograms; current: ReportHistograms } | null;
  geometry: Geometry | null;
  artifacts: Record<string, string> | null;
  editLog: CurationAction[];
}

export class SessionView {
  private api: ApiClient;
  readonly sessionId: string;
  epoch = 0;
  analyzed = false;
  layer: Layer = "overlay";
  selectedId: number | null = null;
  busy = false;
  conflict = false;
  report: Report | null = null;
  autoReport: Report | null = null;
  histograms: { auto: ReportHistograms; current: ReportHistograms } | null = null;
  geometry: Geometry | null = null;
  artifacts: Record<string, string> | null = null;
  editLog: CurationAction[] = [];
  private undoStack: CurationAction[] = [];

  constructor(api: ApiClient, sessionId: string) {
    this.api = api;
    this.sessionId = sessionId;
  }

  snapshot(): SessionSnapshot {
    return {
      sessionId: this.sessionId,
      epoch: this.epoch,
      analyzed: this.analyzed,
      layer: this.layer,
      selectedId: this.selectedId,
      busy: this.busy,
      conflict: this.conflict,
      report: this.report,
      autoReport: this.autoReport,
      histograms: this.histograms,
      geometry: this.geometry,
      artifacts: this.artifacts,
      editLog: [...this.editLog],
    };
  }

  selectedElement(): GeometryElement | null {
    if (this.selectedId === null || !this.geometry) return null;
    return this.geometry.elements.find((e) => e.id === this.selectedId) ?? null;
  }

  setLayer(layer: Layer): void {
    this.layer = layer;
  }

  /** One request per session at a time; concurrent gestures are bugs in
   * the caller, so fail loudly instead of queueing. */
  private async exclusive<T>(work: () => Promise<T>): Promise<T> {
    if (this.busy) throw new Error("request already in flight for this session");
    this.busy = true;
    try {
      return await work();
    } finally {
      this.busy = false;
    }
  }

  /** Rebuild the full view from the server (page load, tab refresh). */
  async refresh(): Promise<void> {
    await this.exclusive(async () => {
      const state = await this.api.getSession(this.sessionId);
      this.epoch = state.epoch;
      this.analyzed = state.analyzed;
      this.report = state.report;
      this.autoReport = state.auto_report;
      this.artifacts = state.artifacts;
      this.editLog = [...state.edits];
      this.undoStack = [...state.edits];
      this.conflict = false;
      this.selectedId = null;
      if (state.analyzed) {
        this.geometry = await this.api.geometry(this.sessionId);
        this.histograms = await this.api.histograms(this.sessionId);
      } else {
        this.geometry = null;
        this.histograms = null;
      }
    });
  }

  async analyze(overrides: Record<string, unknown>): Promise<void> {
    await this.exclusive(async () => {
      const resp = await this.api.analyze(this.sessionId, overrides);
      this.epoch = resp.epoch;
      this.analyzed = true;
      this.report = resp.report;
      this.autoReport = resp.report;
      this.artifacts = resp.artifacts;
      // a new epoch invalidates element ids: selection and edits reset
      this.selectedId = null;
      this.editLog = [];
      this.undoStack = [];
      this.conflict = false;
      this.geometry = await this.api.geometry(this.sessionId);
      this.histograms = await this.api.histograms(this.sessionId);
    });
  }

  /** Canvas click: select the element under the cursor or clear. */
  clickAt(canvasPt: Point, transform: ViewTransform, tolerancePx = 6): number | null {
    if (!this.geometry) return null;
    const imagePt = canvasToImage(transform, canvasPt);
    const hit = hitTestElement(this.geometry, imagePt, tolerancePx);
    this.selectedId = hit ? hit.id : null;
    return this.selectedId;
  }

  clearSelection(): void {
    this.selectedId = null;
  }

  private async applyEdit(edit: CurationAction): Promise<void> {
    await this.exclusive(async () => {
      try {
        const resp = await this.api.curate(this.sessionId, this.epoch, [edit]);
        this.report = resp.report;
        this.histograms = {
          auto: resp.auto_histograms,
          current: resp.report.metrics.histograms,
        };
        this.artifacts = resp.artifacts;
        this.editLog.push(edit);
        this.undoStack.push(edit);
        this.geometry = await this.api.geometry(this.sessionId);
      } catch (err) {
        if (err instanceof ApiError && err.isStaleEpoch) {
          this.conflict = true;
          this.selectedId = null;
        }
        throw err;
      }
    });
  }

  async removeSelected(): Promise<void> {
    if (this.selectedId === null) throw new Error("nothing selected");
    await this.applyEdit({ action: "remove", element_id: this.selectedId });
  }

  async restore(elementId: number): Promise<void> {
    await this.applyEdit({ action: "restore", element_id: elementId });
  }

  /** Undo is itself a logged server edit (the inverse action), so the
   * server edit log stays the single source of truth for replay. */
  async undo(): Promise<void> {
    const last = this.undoStack[this.undoStack.length - 1];
    if (!last) throw new Error("nothing to undo");
    const inverse: CurationAction = {
      action: last.action === "remove" ? "restore" : "remove",
      element_id: last.element_id,
    };
    await this.applyEdit(inverse);
    // the inverse pair is spent: drop both from the undo stack
    this.undoStack.pop();
    this.undoStack.pop();
  }

  canUndo(): boolean {
    return this.undoStack.length > 0;
  }
}
