/**
 * Async action layer: every mutation talks to the service first and feeds
 * the store from the acknowledged response, so the lists never hold
 * phantom entries the server does not know about.
 */

import { ApiClient, ApiError } from "./api";
import { isTemplateDocValid, validateTemplateDoc } from "./schema";
import {
  JobEntry,
  RegionEntry,
  Store,
  WorkbenchState,
  clearOverlay,
  regionBounds,
  removeAlias,
  removeFeature,
  removeRegion,
  setOverlay,
  setRegion,
  upsertAlias,
  upsertFeature,
  upsertJob,
} from "./state";
import type { GeoJsonGeometry, JobStatus, Role, TemplateDoc } from "./types";

const POLL_START_MS = 1000;
const POLL_MAX_MS = 5000;
const POLL_BACKOFF = 1.5;

export interface WorkbenchOptions {
  /** poll intervals can be compressed in tests */
  pollStartMs?: number;
  pollMaxMs?: number;
  /** turn render PNGs into displayable URLs; defaults to object URLs */
  makeImageUrl?: (bytes: ArrayBuffer) => string;
}

export function ringsToGeoJson(rings: Array<Array<[number, number]>>): GeoJsonGeometry {
  return {
    type: "MultiPolygon",
    coordinates: rings.map((ring) => {
      const closed =
        ring.length > 0 &&
        (ring[0][0] !== ring[ring.length - 1][0] || ring[0][1] !== ring[ring.length - 1][1])
          ? [...ring, ring[0]]
          : ring;
      return [closed.map(([x, y]) => [x, y])];
    }),
  };
}

export function geoJsonToRings(geometry: GeoJsonGeometry): Array<Array<[number, number]>> {
  const rings: Array<Array<[number, number]>> = [];
  const polygons =
    geometry.type === "Polygon"
      ? [geometry.coordinates as number[][][]]
      : (geometry.coordinates as number[][][][]);
  for (const polygon of polygons) {
    for (const ring of polygon) {
      rings.push(ring.map((pt) => [pt[0], pt[1]]));
    }
  }
  return rings;
}

export class Workbench {
  readonly store: Store;
  readonly api: ApiClient;
  private readonly pollStartMs: number;
  private readonly pollMaxMs: number;
  private readonly makeImageUrl: (bytes: ArrayBuffer) => string;

  constructor(api: ApiClient, store = new Store(), options: WorkbenchOptions = {}) {
    this.api = api;
    this.store = store;
    this.pollStartMs = options.pollStartMs ?? POLL_START_MS;
    this.pollMaxMs = options.pollMaxMs ?? POLL_MAX_MS;
    this.makeImageUrl =
      options.makeImageUrl ??
      ((bytes) => URL.createObjectURL(new Blob([bytes], { type: "image/png" })));
  }

  get state(): WorkbenchState {
    return this.store.get();
  }

  private async refreshHash(): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    const summary = await this.api.getSession(sid);
    this.store.update((s) => ({ ...s, stateHash: summary.state_hash, complete: summary.complete }));
  }

  async createSession(): Promise<string> {
    const id = await this.api.createSession();
    this.store.update((s) => ({ ...s, sessionId: id }));
    await this.refreshHash();
    return id;
  }

  async setTargetResolution(resolution: number): Promise<void> {
    const sid = this.requireSession();
    await this.api.updateSettings(sid, { target_resolution: resolution });
    await this.refreshHash();
  }

  /** Polygon finished by the draw tool or parsed from an uploaded file. */
  async setRegion(role: Role, rings: Array<Array<[number, number]>>): Promise<void> {
    const sid = this.requireSession();
    await this.api.putRegion(sid, role, ringsToGeoJson(rings));
    this.store.update((s) => setRegion(s, { role, rings }));
    await this.refreshHash();
  }

  async removeRegion(role: Role): Promise<void> {
    const sid = this.requireSession();
    await this.api.deleteRegion(sid, role);
    this.store.update((s) => removeRegion(s, role));
    await this.refreshHash();
  }

  /** Add an alias string; a 422 leaves the list untouched and records the
   * parser offset for the editor underline. */
  async addAlias(text: string): Promise<boolean> {
    const sid = this.requireSession();
    try {
      const echo = await this.api.addAlias(sid, text);
      this.store.update((s) =>
        upsertAlias(s, {
          name: echo.alias.name,
          text,
          canonical: echo.canonical,
          visible: false,
        }),
      );
      await this.refreshHash();
      return true;
    } catch (error) {
      this.recordEditorError("alias", error);
      return false;
    }
  }

  async removeAlias(name: string): Promise<void> {
    const sid = this.requireSession();
    await this.api.deleteAlias(sid, name);
    this.store.update((s) => removeAlias(s, name));
    await this.refreshHash();
  }

  async addFeature(text: string): Promise<boolean> {
    const sid = this.requireSession();
    try {
      const echo = await this.api.addFeature(sid, text);
      this.store.update((s) =>
        upsertFeature(s, { name: echo.feature.name, text, canonical: echo.canonical, visible: false }),
      );
      await this.refreshHash();
      return true;
    } catch (error) {
      this.recordEditorError("feature", error);
      return false;
    }
  }

  async removeFeature(name: string): Promise<void> {
    const sid = this.requireSession();
    await this.api.deleteFeature(sid, name);
    this.store.update((s) => removeFeature(s, name));
    await this.refreshHash();
  }

  /** First visualization fetches statistics (the server computes lazily). */
  async loadStats(aliasName: string): Promise<void> {
    const sid = this.requireSession();
    const stats = await this.api.layerStats(sid, aliasName);
    this.store.update((s) => ({
      ...s,
      aliases: s.aliases.map((a) => (a.name === aliasName ? { ...a, stats } : a)),
    }));
  }

  /** Toggle a layer overlay; on, it fetches the render for the layer's
   * full extent (the current region bounds). */
  async toggleLayer(layer: string, kind: "categorical" | "continuous" = "continuous"): Promise<void> {
    const sid = this.requireSession();
    const existing = this.state.overlays.find((o) => o.layer === layer);
    if (existing) {
      this.store.update((s) => clearOverlay(s, layer));
      this.setLayerVisibility(layer, false);
      return;
    }
    const bounds = regionBounds(this.state.regions);
    if (!bounds) {
      throw new Error("no region to derive an extent from");
    }
    const png = await this.api.renderPng(sid, layer);
    this.store.update((s) =>
      setOverlay(s, { layer, kind, imageUrl: this.makeImageUrl(png), extent: bounds }),
    );
    this.setLayerVisibility(layer, true);
    const alias = this.state.aliases.find((a) => a.name === layer);
    if (alias && !alias.stats) {
      await this.loadStats(layer);
    }
  }

  private setLayerVisibility(layer: string, visible: boolean): void {
    this.store.update((s) => ({
      ...s,
      aliases: s.aliases.map((a) => (a.name === layer ? { ...a, visible } : a)),
      features: s.features.map((f) => (f.name === layer ? { ...f, visible } : f)),
    }));
  }

  /** Update the operation panel and persist it into the session, so the
   * configuration exports with the template. */
  async setOperation(operation: WorkbenchState["operation"]): Promise<void> {
    this.store.update((s) => ({ ...s, operation }));
    const sid = this.state.sessionId;
    if (sid) {
      await this.api.updateSettings(sid, { operation: this.operationBody() });
      await this.refreshHash();
    }
  }

  private operationBody(): Record<string, unknown> {
    const op = this.state.operation;
    return op.kind === "cluster"
      ? { cluster: { k: op.k, seed: op.seed } }
      : { similarity: { metric: op.metric, standardize: op.standardize } };
  }

  /** Submit the configured operation and poll to completion (1s interval
   * backing off to 5s). Resolves with the final job status. */
  async runOperation(): Promise<JobStatus> {
    const sid = this.requireSession();
    const op = this.state.operation;
    const jobId = await this.api.run(sid, { operation: this.operationBody() });
    this.store.update((s) =>
      upsertJob(s, { id: jobId, kind: op.kind, status: "queued", progress: 0 }),
    );
    const status = await this.pollJob(jobId);
    if (status.status === "done" && status.result) {
      const bounds = regionBounds(this.state.regions);
      const kind = status.result.kind === "cluster_map" ? "categorical" : "continuous";
      if (bounds) {
        const png = await this.api.renderPng(sid, jobId);
        this.store.update((s) =>
          setOverlay(s, { layer: jobId, kind, imageUrl: this.makeImageUrl(png), extent: bounds }),
        );
      }
    }
    return status;
  }

  async pollJob(jobId: string): Promise<JobStatus> {
    let interval = this.pollStartMs;
    for (;;) {
      const status = await this.api.jobStatus(jobId);
      this.updateJob(status);
      if (status.status === "done" || status.status === "failed") {
        return status;
      }
      await sleep(interval);
      interval = Math.min(interval * POLL_BACKOFF, this.pollMaxMs);
    }
  }

  private updateJob(status: JobStatus): void {
    const entry: JobEntry = {
      id: status.id,
      kind: status.kind,
      status: status.status,
      progress: status.progress,
      error: status.error?.message,
    };
    this.store.update((s) => upsertJob(s, entry));
  }

  downloadResultUrl(jobId: string): string {
    return this.api.resultUrl(jobId);
  }

  /** Export the session template; the document is schema-checked locally
   * before it is offered for download. */
  async exportTemplate(): Promise<TemplateDoc> {
    const sid = this.requireSession();
    const doc = await this.api.exportTemplate(sid);
    const issues = validateTemplateDoc(doc);
    if (issues.length > 0) {
      throw new Error(`exported template fails the shared schema: ${issues[0].path}`);
    }
    return doc;
  }

  /** Import a template file, replacing the whole session state. The caller
   * is responsible for user confirmation; rejection leaves state intact. */
  async importTemplate(doc: unknown): Promise<void> {
    const sid = this.requireSession();
    const issues = validateTemplateDoc(doc);
    if (issues.length > 0) {
      throw new ApiError(422, {
        code: "schema_error",
        message: issues[0].message,
        field: issues[0].path,
      });
    }
    const summary = await this.api.importTemplate(sid, doc as TemplateDoc);
    const template = doc as TemplateDoc;
    this.store.update((s) => {
      let next: WorkbenchState = {
        ...s,
        stateHash: summary.state_hash,
        complete: summary.complete,
        regions: [],
        aliases: template.aliases.map((text) => ({
          name: text.split(/[:=]/, 1)[0],
          text,
          canonical: text,
          visible: false,
        })),
        features: template.features.map((text) => ({
          name: text.split(/[:=]/, 1)[0],
          text,
          canonical: text,
          visible: false,
        })),
        overlays: [],
        editorError: null,
      };
      next = setRegion(next, { role: "query", rings: geoJsonToRings(template.regions.query) });
      if (template.regions.reference) {
        next = setRegion(next, {
          role: "reference",
          rings: geoJsonToRings(template.regions.reference),
        });
      }
      if ("cluster" in template.operation) {
        next.operation = {
          kind: "cluster",
          k: template.operation.cluster.k,
          seed: template.operation.cluster.seed ?? 0,
        };
      } else {
        next.operation = {
          kind: "similarity",
          metric: template.operation.similarity.metric ?? "euclidean",
          standardize: template.operation.similarity.standardize ?? true,
        };
      }
      return next;
    });
  }

  private requireSession(): string {
    const sid = this.state.sessionId;
    if (!sid) {
      throw new Error("no active session");
    }
    return sid;
  }

  private recordEditorError(scope: "alias" | "feature", error: unknown): void {
    if (error instanceof ApiError) {
      this.store.update((s) => ({
        ...s,
        editorError: { scope, message: error.message, offset: error.offset },
      }));
      return;
    }
    throw error;
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export { isTemplateDocValid };
