/**
 * Typed client for the zonelab HTTP API. Every non-2xx response carries a
 * structured {code, message, field?} body; ApiError surfaces it along with
 * the parser byte offset when the field encodes one ("offset:N").
 */

import type {
  AliasEcho,
  BandStats,
  FeatureEcho,
  GeoJsonGeometry,
  JobStatus,
  ProductInfo,
  Role,
  SessionSummary,
  StructuredError,
  TemplateDoc,
} from "./types";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly field?: string;

  constructor(status: number, body: StructuredError) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.field = body.field;
  }

  /** Byte offset into the offending DSL string, when the server reported one. */
  get offset(): number | null {
    if (this.field && this.field.startsWith("offset:")) {
      const n = Number(this.field.slice("offset:".length));
      return Number.isFinite(n) ? n : null;
    }
    return null;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let structured: StructuredError;
      try {
        structured = (await response.json()) as StructuredError;
      } catch {
        structured = { code: "http_error", message: response.statusText };
      }
      throw new ApiError(response.status, structured);
    }
    return (await response.json()) as T;
  }

  private async binary(path: string): Promise<ArrayBuffer> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, (await response.json()) as StructuredError);
    }
    return response.arrayBuffer();
  }

  listProducts(): Promise<ProductInfo[]> {
    return this.request("GET", "/api/catalog/products");
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ id: string }>("POST", "/api/sessions");
    return body.id;
  }

  getSession(id: string): Promise<SessionSummary> {
    return this.request("GET", `/api/sessions/${id}`);
  }

  exportTemplate(id: string): Promise<TemplateDoc> {
    return this.request("GET", `/api/sessions/${id}/template`);
  }

  importTemplate(id: string, doc: TemplateDoc): Promise<SessionSummary> {
    return this.request("PUT", `/api/sessions/${id}/template`, doc);
  }

  putRegion(id: string, role: Role, geometry: GeoJsonGeometry): Promise<SessionSummary> {
    return this.request("PUT", `/api/sessions/${id}/regions/${role}`, geometry);
  }

  deleteRegion(id: string, role: Role): Promise<SessionSummary> {
    return this.request("DELETE", `/api/sessions/${id}/regions/${role}`);
  }

  updateSettings(
    id: string,
    settings: { name?: string; target_resolution?: number; operation?: Record<string, unknown> },
  ): Promise<SessionSummary> {
    return this.request("PUT", `/api/sessions/${id}/settings`, settings);
  }

  addAlias(id: string, text: string): Promise<AliasEcho> {
    return this.request("POST", `/api/sessions/${id}/aliases`, { text });
  }

  deleteAlias(id: string, name: string): Promise<SessionSummary> {
    return this.request("DELETE", `/api/sessions/${id}/aliases/${encodeURIComponent(name)}`);
  }

  addFeature(id: string, text: string): Promise<FeatureEcho> {
    return this.request("POST", `/api/sessions/${id}/features`, { text });
  }

  deleteFeature(id: string, name: string): Promise<SessionSummary> {
    return this.request("DELETE", `/api/sessions/${id}/features/${encodeURIComponent(name)}`);
  }

  layerStats(id: string, layer: string): Promise<BandStats> {
    return this.request("GET", `/api/sessions/${id}/layers/${encodeURIComponent(layer)}/stats`);
  }

  async run(id: string, body: Record<string, unknown> = {}): Promise<string> {
    const out = await this.request<{ job_id: string }>("POST", `/api/sessions/${id}/run`, body);
    return out.job_id;
  }

  jobStatus(jobId: string): Promise<JobStatus> {
    return this.request("GET", `/api/jobs/${jobId}`);
  }

  cancelJob(jobId: string): Promise<JobStatus> {
    return this.request("POST", `/api/jobs/${jobId}/cancel`);
  }

  resultTiff(jobId: string): Promise<ArrayBuffer> {
    return this.binary(`/api/jobs/${jobId}/result.tif`);
  }

  resultUrl(jobId: string): string {
    return `${this.baseUrl}/api/jobs/${jobId}/result.tif`;
  }

  report(jobId: string): Promise<unknown> {
    return this.request("GET", `/api/jobs/${jobId}/report`);
  }

  renderUrl(
    id: string,
    layer: string,
    options: { bbox?: [number, number, number, number]; width?: number; height?: number; min?: number; max?: number } = {},
  ): string {
    const params = new URLSearchParams();
    if (options.bbox) params.set("bbox", options.bbox.join(","));
    if (options.width) params.set("width", String(options.width));
    if (options.height) params.set("height", String(options.height));
    if (options.min !== undefined) params.set("min", String(options.min));
    if (options.max !== undefined) params.set("max", String(options.max));
    const query = params.toString();
    return `${this.baseUrl}/api/sessions/${id}/render/${encodeURIComponent(layer)}${query ? "?" + query : ""}`;
  }

  renderPng(
    id: string,
    layer: string,
    options?: Parameters<ApiClient["renderUrl"]>[2],
  ): Promise<ArrayBuffer> {
    const url = this.renderUrl(id, layer, options);
    return this.binary(url.slice(this.baseUrl.length));
  }
}
