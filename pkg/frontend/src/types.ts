// Shapes of the curation-service JSON payloads. Field names mirror the
// server exactly; do not rename.

export interface Histogram {
  edges: number[];
  counts: number[];
}

export interface ReportHistograms {
  diameter_um: Histogram;
  length_mm: Histogram;
  tortuosity: Histogram;
}

export interface ReportMetrics {
  vad_percent: number;
  vld_percent: number;
  mean_diameter_um: number;
  median_diameter_um: number;
  total_vessel_length_mm: number;
  mean_tortuosity: number;
  branchpoint_density_per_mm: number;
  fractal_dimension: number;
  fd_stddev: number;
  cf: number;
  histograms: ReportHistograms;
  counts: Record<string, number>;
  parameters: Record<string, unknown>;
}

export interface Report {
  schema: string;
  config: Record<string, unknown>;
  config_hash: string;
  input_sha256: string;
  metrics: ReportMetrics;
  warnings: string[];
}

export type ElementClass = "segment" | "branch" | "isolated";

export interface GeometryElement {
  id: number;
  class: ElementClass;
  /** Centerline as [y, x] pixel pairs, consecutive points adjacent. */
  path: [number, number][];
  arc_length_um: number;
  mean_diameter_um: number;
  tortuosity: number | null;
  is_loop: boolean;
  suppressed: boolean;
  curated_out: boolean;
}

export interface GeometryNode {
  id: number;
  centroid_yx: [number, number];
  diameter_um: number;
}

export interface GeometryMesh {
  id: number;
  area_um2: number;
  centroid_yx: [number, number];
}

export interface Geometry {
  shape: [number, number];
  pixel_size_um: number;
  elements: GeometryElement[];
  nodes: GeometryNode[];
  meshes: GeometryMesh[];
}

export type ArtifactName =
  | "overlay"
  | "thickness"
  | "histograms"
  | "original"
  | "vesselness"
  | "mask"
  | "geometry";

export interface CurationAction {
  action: "remove" | "restore";
  element_id: number;
}

export interface SessionState {
  id: string;
  filename: string;
  pixel_size_um: number;
  epoch: number;
  edit_seq: number;
  analyzed: boolean;
  config: Record<string, unknown> | null;
  config_hash: string | null;
  edits: CurationAction[];
  report: Report | null;
  auto_report: Report | null;
  artifacts: Record<string, string> | null;
}

export interface AnalyzeResponse {
  epoch: number;
  config_hash: string;
  config: Record<string, unknown>;
  report: Report;
  artifacts: Record<string, string>;
}

export interface CurationResponse {
  epoch: number;
  edit_seq: number;
  edit_count: number;
  report: Report;
  auto_histograms: ReportHistograms;
  artifacts: Record<string, string>;
}

export interface HistogramsArtifact {
  auto: ReportHistograms;
  current: ReportHistograms;
}

export interface ProfileSpec {
  y0: number;
  x0: number;
  y1: number;
  x1: number;
}

export interface PreviewEntry {
  sigma_max: number;
  mask_sha256: string;
  /** Base64 PNG of the thresholded mask at this scale cap. */
  mask_png: string;
  profile?: number[];
}

export interface PreviewResponse {
  previews: PreviewEntry[];
  source_profile?: number[];
}
