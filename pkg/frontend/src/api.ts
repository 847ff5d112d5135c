/** Typed client for the tfopt HTTP service. All compute happens server
 * side; this file only moves JSON and PNG bytes. */

import type {
  HistogramDoc,
  JobDoc,
  MetricReportDoc,
  OptimizeRequest,
  RenderRequest,
  ResidualRequest,
  ResidualResult,
  TfDoc,
  TfEntry,
  VolumeList,
} from "./types.js";
import { bytesToBase64 } from "./util.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Method surface the UI depends on; tests substitute an in-memory fake. */
export interface Api {
  listVolumes(): Promise<VolumeList>;
  getTf(name: string): Promise<TfDoc>;
  putTf(name: string, entries: TfEntry[]): Promise<TfDoc>;
  histogram(volume: string, bins?: number): Promise<HistogramDoc>;
  render(req: RenderRequest): Promise<Uint8Array>;
  residual(req: ResidualRequest): Promise<ResidualResult>;
  optimize(req: OptimizeRequest): Promise<string>;
  getJob(id: string): Promise<JobDoc>;
  metrics(imageA: Uint8Array, imageB: Uint8Array): Promise<MetricReportDoc>;
}

export type FetchLike = (
  url: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
  },
) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  text(): Promise<string>;
  arrayBuffer(): Promise<ArrayBuffer>;
}>;

async function errorMessage(res: {
  status: number;
  json(): Promise<unknown>;
  text(): Promise<string>;
}): Promise<string> {
  try {
    const doc = (await res.json()) as { detail?: unknown };
    if (doc && typeof doc.detail === "string") return doc.detail;
    return JSON.stringify(doc);
  } catch {
    return `HTTP ${res.status}`;
  }
}

export class ApiClient implements Api {
  constructor(
    private readonly baseUrl = "",
    private readonly session: string | null = null,
    private readonly fetchImpl: FetchLike = (url, init) =>
      fetch(url, init as RequestInit),
  ) {}

  /** Same server, different isolated working set. */
  withSession(session: string): ApiClient {
    return new ApiClient(this.baseUrl, session, this.fetchImpl);
  }

  private url(path: string, query: Record<string, string | number> = {}): string {
    const q = new URLSearchParams();
    for (const [k, v] of Object.entries(query)) q.set(k, String(v));
    if (this.session !== null) q.set("session", this.session);
    const qs = q.toString();
    return this.baseUrl + path + (qs ? `?${qs}` : "");
  }

  private withSessionBody<T extends object>(body: T): T {
    if (this.session === null) return body;
    return { ...body, session: this.session };
  }

  private async requestJson<T>(
    method: string,
    path: string,
    body?: object,
    query: Record<string, string | number> = {},
  ): Promise<T> {
    const res = await this.fetchImpl(this.url(path, query), {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) throw new ApiError(res.status, await errorMessage(res));
    return (await res.json()) as T;
  }

  async listVolumes(): Promise<VolumeList> {
    return this.requestJson<VolumeList>("GET", "/api/volumes");
  }

  async getTf(name: string): Promise<TfDoc> {
    return this.requestJson<TfDoc>("GET", `/api/tf/${encodeURIComponent(name)}`);
  }

  async putTf(name: string, entries: TfEntry[]): Promise<TfDoc> {
    return this.requestJson<TfDoc>(
      "PUT",
      `/api/tf/${encodeURIComponent(name)}`,
      { entries },
    );
  }

  async histogram(volume: string, bins = 64): Promise<HistogramDoc> {
    return this.requestJson<HistogramDoc>(
      "GET",
      `/api/histogram/${encodeURIComponent(volume)}`,
      undefined,
      { bins },
    );
  }

  /** Returns raw PNG bytes. */
  async render(req: RenderRequest): Promise<Uint8Array> {
    const res = await this.fetchImpl(this.url("/api/render"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(this.withSessionBody(req)),
    });
    if (!res.ok) throw new ApiError(res.status, await errorMessage(res));
    return new Uint8Array(await res.arrayBuffer());
  }

  async residual(req: ResidualRequest): Promise<ResidualResult> {
    return this.requestJson<ResidualResult>(
      "POST",
      "/api/residual",
      this.withSessionBody(req),
    );
  }

  /** Submits an optimization job; returns its id. Poll with getJob. */
  async optimize(req: OptimizeRequest): Promise<string> {
    const doc = await this.requestJson<{ job: string }>(
      "POST",
      "/api/optimize",
      this.withSessionBody(req),
    );
    return doc.job;
  }

  async getJob(id: string): Promise<JobDoc> {
    return this.requestJson<JobDoc>("GET", `/api/jobs/${encodeURIComponent(id)}`);
  }

  async metrics(imageA: Uint8Array, imageB: Uint8Array): Promise<MetricReportDoc> {
    return this.requestJson<MetricReportDoc>("POST", "/api/metrics", {
      image_a: bytesToBase64(imageA),
      image_b: bytesToBase64(imageB),
    });
  }
}
