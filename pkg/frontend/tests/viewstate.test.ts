import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import {
  DEFAULT_PARAMS,
  paramsToOverrides,
  SessionView,
  validateParams,
} from "../src/viewstate.js";
import type {
  CurationAction,
  Geometry,
  Report,
  ReportHistograms,
} from "../src/types.js";

const IDENTITY = { scale: 1, tx: 0, ty: 0 };

function fakeHistograms(diameterCounts: number[]): ReportHistograms {
  const edges = Array.from({ length: diameterCounts.length + 1 }, (_, i) => i * 5);
  return {
    diameter_um: { edges, counts: diameterCounts },
    length_mm: { edges: [0, 0.1], counts: [2] },
    tortuosity: { edges: [0, 0.05], counts: [2] },
  };
}

function fakeReport(totalLength: number, edits: number): Report {
  return {
    schema: "octava-report-v1",
    config: {},
    config_hash: "hash0",
    input_sha256: "input0",
    metrics: {
      vad_percent: 10,
      vld_percent: 1,
      mean_diameter_um: 30,
      median_diameter_um: 30,
      total_vessel_length_mm: totalLength,
      mean_tortuosity: 0.1,
      branchpoint_density_per_mm: 0,
      fractal_dimension: 1.2,
      fd_stddev: 0.1,
      cf: 0,
      histograms: fakeHistograms(edits > 0 ? [1, 1] : [2, 1]),
      counts: {},
      parameters: { curation_edits: edits },
    },
    warnings: [],
  };
}

interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
}

interface FakeServer {
  api: ApiClient;
  calls: RecordedCall[];
  state: { epoch: number; edits: CurationAction[] };
}

function makeFakeServer(): FakeServer {
  const state = { epoch: 1, edits: [] as CurationAction[] };
  const calls: RecordedCall[] = [];

  const geometry = (): Geometry => ({
    shape: [64, 64],
    pixel_size_um: 4,
    elements: [0, 1].map((id) => ({
      id,
      class: "segment" as const,
      path: id === 0
        ? ([[10, 2], [10, 3], [10, 4], [10, 5]] as [number, number][])
        : ([[30, 20], [31, 20], [32, 20]] as [number, number][]),
      arc_length_um: 12,
      mean_diameter_um: id === 0 ? 4 : 8,
      tortuosity: 0,
      is_loop: false,
      suppressed: false,
      curated_out: state.edits.filter((e) => e.element_id === id).at(-1)?.action === "remove",
    })),
    nodes: [],
    meshes: [],
  });

  const activeEdits = () =>
    new Set(
      [0, 1].filter(
        (id) => state.edits.filter((e) => e.element_id === id).at(-1)?.action === "remove",
      ),
    ).size;

  const json = (status: number, body: unknown) =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });

  const fetchImpl: typeof fetch = async (input, init) => {
    const path = new URL(String(input)).pathname;
    const method = init?.method ?? "GET";
    const body = typeof init?.body === "string" ? JSON.parse(init.body) : null;
    calls.push({ method, path, body });

    if (method === "GET" && path === "/api/sessions/s1") {
      return json(200, {
        id: "s1",
        filename: "scan.png",
        pixel_size_um: 4,
        epoch: state.epoch,
        edit_seq: state.edits.length,
        analyzed: true,
        config: {},
        config_hash: "hash0",
        edits: state.edits,
        report: fakeReport(10 - activeEdits(), state.edits.length),
        auto_report: fakeReport(10, 0),
        artifacts: { overlay: "/api/sessions/s1/artifacts/overlay?v=k" },
      });
    }
    if (method === "POST" && path === "/api/sessions/s1/analyze") {
      state.epoch += 1;
      state.edits = [];
      return json(200, {
        epoch: state.epoch,
        config_hash: "hash0",
        config: {},
        report: fakeReport(10, 0),
        artifacts: { overlay: "/api/sessions/s1/artifacts/overlay?v=k" },
      });
    }
    if (method === "POST" && path === "/api/sessions/s1/curation") {
      if (body.epoch !== state.epoch) {
        return json(409, {
          detail: `stale epoch ${body.epoch}; current is ${state.epoch}`,
        });
      }
      state.edits.push(...(body.edits as CurationAction[]));
      return json(200, {
        epoch: state.epoch,
        edit_seq: state.edits.length,
        edit_count: state.edits.length,
        report: fakeReport(10 - activeEdits(), state.edits.length),
        auto_histograms: fakeHistograms([2, 1]),
        artifacts: { overlay: "/api/sessions/s1/artifacts/overlay?v=k2" },
      });
    }
    if (method === "GET" && path === "/api/sessions/s1/artifacts/geometry") {
      return json(200, geometry());
    }
    if (method === "GET" && path === "/api/sessions/s1/artifacts/histograms") {
      return json(200, {
        auto: fakeHistograms([2, 1]),
        current: fakeHistograms(activeEdits() > 0 ? [1, 1] : [2, 1]),
      });
    }
    return json(404, { detail: `unhandled ${method} ${path}` });
  };

  return { api: new ApiClient("http://fake", fetchImpl), calls, state };
}

describe("parameter panel", () => {
  it("accepts the defaults", () => {
    expect(validateParams(DEFAULT_PARAMS)).toEqual([]);
  });

  it("rejects invalid values with one message each", () => {
    const errors = validateParams({
      ...DEFAULT_PARAMS,
      median_kernel: 4,
      sigma_max: 0,
      method: "otsu",
    });
    expect(errors).toHaveLength(3);
  });

  it("requires an odd window only for adaptive", () => {
    expect(validateParams({ ...DEFAULT_PARAMS, method: "adaptive", window: 30 }))
      .toHaveLength(1);
    expect(validateParams({ ...DEFAULT_PARAMS, method: "adaptive", window: 31 }))
      .toEqual([]);
    expect(validateParams({ ...DEFAULT_PARAMS, method: "fuzzy", window: null }))
      .toEqual([]);
  });

  it("maps the panel onto server overrides", () => {
    const on = paramsToOverrides({ ...DEFAULT_PARAMS, sigma_max: 12 });
    expect(on.frangi).toEqual({ sigma_max: 12 });
    const off = paramsToOverrides({ ...DEFAULT_PARAMS, frangi_enabled: false });
    expect(off.frangi).toBeNull();
  });
});

describe("session view", () => {
  it("refresh rebuilds the whole view from the server", async () => {
    const { api } = makeFakeServer();
    const view = new SessionView(api, "s1");
    await view.refresh();
    expect(view.analyzed).toBe(true);
    expect(view.epoch).toBe(1);
    expect(view.report?.metrics.total_vessel_length_mm).toBe(10);
    expect(view.geometry?.elements).toHaveLength(2);
    expect(view.histograms?.auto.diameter_um.counts).toEqual([2, 1]);
  });

  it("click selects the element under the cursor, background clears", async () => {
    const { api } = makeFakeServer();
    const view = new SessionView(api, "s1");
    await view.refresh();
    expect(view.clickAt({ x: 3, y: 10 }, IDENTITY)).toBe(0);
    expect(view.selectedElement()?.id).toBe(0);
    expect(view.clickAt({ x: 50, y: 50 }, IDENTITY)).toBeNull();
    expect(view.selectedId).toBeNull();
  });

  it("remove issues exactly one curation call and updates state", async () => {
    const { api, calls } = makeFakeServer();
    const view = new SessionView(api, "s1");
    await view.refresh();
    view.clickAt({ x: 3, y: 10 }, IDENTITY);
    await view.removeSelected();
    const curations = calls.filter((c) => c.path.endsWith("/curation"));
    expect(curations).toHaveLength(1);
    expect(curations[0].body).toEqual({
      epoch: 1,
      edits: [{ action: "remove", element_id: 0 }],
    });
    expect(view.report?.metrics.total_vessel_length_mm).toBe(9);
    expect(view.editLog).toEqual([{ action: "remove", element_id: 0 }]);
    expect(view.selectedElement()?.curated_out).toBe(true);
    expect(view.canUndo()).toBe(true);
  });

  it("undo sends the inverse edit and spends the stack entry", async () => {
    const { api, calls } = makeFakeServer();
    const view = new SessionView(api, "s1");
    await view.refresh();
    view.clickAt({ x: 3, y: 10 }, IDENTITY);
    await view.removeSelected();
    await view.undo();
    const bodies = calls.filter((c) => c.path.endsWith("/curation")).map((c) => c.body);
    expect(bodies[1]).toEqual({
      epoch: 1,
      edits: [{ action: "restore", element_id: 0 }],
    });
    expect(view.canUndo()).toBe(false);
    expect(view.report?.metrics.total_vessel_length_mm).toBe(10);
    // the log keeps both entries: undo is an ordinary logged edit
    expect(view.editLog).toHaveLength(2);
  });

  it("re-analysis clears selection and edit history", async () => {
    const { api } = makeFakeServer();
    const view = new SessionView(api, "s1");
    await view.refresh();
    view.clickAt({ x: 3, y: 10 }, IDENTITY);
    await view.removeSelected();
    await view.analyze({ frangi: null });
    expect(view.epoch).toBe(2);
    expect(view.selectedId).toBeNull();
    expect(view.editLog).toEqual([]);
    expect(view.canUndo()).toBe(false);
  });

  it("flags the conflict when the server reports a stale epoch", async () => {
    const { api, state } = makeFakeServer();
    const view = new SessionView(api, "s1");
    await view.refresh();
    view.clickAt({ x: 3, y: 10 }, IDENTITY);
    state.epoch = 2; // another client re-analyzed behind our back
    await expect(view.removeSelected()).rejects.toThrow(/stale epoch/);
    expect(view.conflict).toBe(true);
    expect(view.selectedId).toBeNull();
    // refresh resolves the conflict against the new epoch
    await view.refresh();
    expect(view.conflict).toBe(false);
    expect(view.epoch).toBe(2);
  });

  it("rejects overlapping requests instead of queueing them", async () => {
    const { api } = makeFakeServer();
    const blocked = new ApiClient("http://fake", () => new Promise<Response>(() => {}));
    const view = new SessionView(api, "s1");
    await view.refresh();
    const stuck = new SessionView(blocked, "s1");
    const pending = stuck.refresh();
    await expect(stuck.analyze({})).rejects.toThrow(/in flight/);
    void pending; // intentionally never settles
  });
});
