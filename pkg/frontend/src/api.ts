// Thin fetch wrapper over the curation-service HTTP API. Every method is
// one endpoint; no caching or local computation here.

import type {
  AnalyzeResponse,
  ArtifactName,
  CurationAction,
  CurationResponse,
  Geometry,
  HistogramsArtifact,
  PreviewResponse,
  ProfileSpec,
  SessionState,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  detail: unknown;

  constructor(status: number, detail: unknown) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
    this.status = status;
    this.detail = detail;
  }

  /** True for the 409 the server raises when the edit epoch is behind. */
  get isStaleEpoch(): boolean {
    return this.status === 409 && typeof this.detail === "string"
      && this.detail.startsWith("stale epoch");
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  readonly baseUrl: string;
  private fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl: FetchLike = fetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail: unknown = await resp.text();
      try {
        detail = (JSON.parse(detail as string) as { detail?: unknown }).detail ?? detail;
      } catch {
        // non-JSON error body; keep the raw text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async createSession(file: Blob, filename: string, pixelSizeUm: number): Promise<string> {
    const form = new FormData();
    form.append("file", file, filename);
    form.append("pixel_size_um", String(pixelSizeUm));
    const body = await this.request<{ id: string }>("/api/sessions", {
      method: "POST",
      body: form,
    });
    return body.id;
  }

  getSession(id: string): Promise<SessionState> {
    return this.request(`/api/sessions/${id}`);
  }

  analyze(id: string, overrides: Record<string, unknown>): Promise<AnalyzeResponse> {
    return this.post(`/api/sessions/${id}/analyze`, overrides);
  }

  curate(id: string, epoch: number, edits: CurationAction[]): Promise<CurationResponse> {
    return this.post(`/api/sessions/${id}/curation`, { epoch, edits });
  }

  geometry(id: string): Promise<Geometry> {
    return this.request(`/api/sessions/${id}/artifacts/geometry`);
  }

  histograms(id: string): Promise<HistogramsArtifact> {
    return this.request(`/api/sessions/${id}/artifacts/histograms`);
  }

  preview(
    id: string,
    sigmaMaxValues: number[],
    profile?: ProfileSpec,
  ): Promise<PreviewResponse> {
    const body: Record<string, unknown> = { sigma_max_values: sigmaMaxValues };
    if (profile) body.profile = profile;
    return this.post(`/api/sessions/${id}/preview`, body);
  }

  /** URL for an image artifact; cacheKey comes from the session's
   * artifact map so the browser refetches only after real changes. */
  artifactUrl(id: string, name: ArtifactName, cacheKey?: string): string {
    const suffix = cacheKey ? `?v=${cacheKey}` : "";
    return `${this.baseUrl}/api/sessions/${id}/artifacts/${name}${suffix}`;
  }

  exportUrl(id: string): string {
    return `${this.baseUrl}/api/sessions/${id}/export`;
  }
}
