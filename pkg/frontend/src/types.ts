/** JSON shapes exchanged with the tfopt HTTP service. */

export interface VolumeInfo {
  name: string;
  kind: "volume" | "residual";
  dims: [number, number, number];
  spacing: [number, number, number];
  vmin: number;
  vmax: number;
  missing_count: number;
}

export interface VolumeList {
  volumes: VolumeInfo[];
}

/** One RGBA row per table entry, every component in [0, 1]. */
export type TfEntry = [number, number, number, number];

export interface TfDoc {
  name?: string;
  n_t: number;
  entries: TfEntry[];
}

export interface HistogramDoc {
  volume: string;
  counts: number[];
  edges: number[];
}

/**
 * Camera selector understood by the render endpoints. Either an explicit
 * eye/look_at pair or an orbit (azimuth/elevation in degrees, distance in
 * world units) around the volume center.
 */
export interface CameraSpec {
  width?: number;
  height?: number;
  fov?: number;
  eye?: [number, number, number];
  look_at?: [number, number, number];
  up?: [number, number, number];
  azimuth?: number;
  elevation?: number;
  distance?: number;
  center?: [number, number, number];
}

export interface RenderSettings {
  step_size?: number;
  extinction_scale?: number;
  background?: [number, number, number, number];
  early_termination?: boolean;
}

export interface RenderRequest {
  volume: string;
  tf?: string;
  camera?: CameraSpec;
  config?: RenderSettings;
}

export interface ResidualRequest {
  ref: string;
  ref_tf: string;
  opt: string;
  opt_tf: string;
  out_name?: string;
}

export interface ResidualResult {
  volume: string;
  max_residual: number;
}

export interface OptimizeRequest {
  ref: string;
  ref_tf: string;
  opt: string;
  solver: string;
  params?: Record<string, unknown>;
  seed?: number;
  init_tf?: string;
  out_name?: string;
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface SolveReportDoc {
  solver: string;
  iterations: number;
  objective: number;
  converged: boolean;
  clamped: boolean;
  condition: number | null;
  [key: string]: unknown;
}

export interface JobResult {
  /** Name the optimized TF was stored under; fetch it via GET /api/tf. */
  tf: string;
  artifact: string;
  report: SolveReportDoc;
}

export interface JobDoc {
  id: string;
  state: JobState;
  progress: number;
  result: JobResult | null;
  error: string | null;
}

export interface MetricReportDoc {
  rmse: number;
  /** null when the images are identical (infinite PSNR). */
  psnr: number | null;
  ssim: number;
}
