/**
 * Workbench state: a pure projection of (server session state + viewport).
 *
 * Two invariants are enforced here rather than in the panels:
 *  - at most one geometry per role; assigning a geometry that already
 *    exists under the other role re-tags it instead of duplicating;
 *  - alias/feature/region entries enter the lists only from
 *    server-acknowledged responses (the async layer in workbench.ts calls
 *    the mutators with the server echo, never optimistically).
 */

import type { BandStats, JobState, Role } from "./types";

export interface Viewport {
  centerX: number;
  centerY: number;
  unitsPerPixel: number;
  widthPx: number;
  heightPx: number;
}

export interface RegionEntry {
  role: Role;
  /** closed rings in CRS coordinates */
  rings: Array<Array<[number, number]>>;
}

export interface AliasEntry {
  name: string;
  text: string;
  canonical: string;
  visible: boolean;
  renderMin?: number;
  renderMax?: number;
  stats?: BandStats;
}

export interface FeatureEntry {
  name: string;
  text: string;
  canonical: string;
  visible: boolean;
}

export interface JobEntry {
  id: string;
  kind: string;
  status: JobState;
  progress: number;
  error?: string;
}

export interface OverlayEntry {
  /** layer name understood by the render endpoint (feature, alias, job id) */
  layer: string;
  kind: "categorical" | "continuous";
  /** object URL or remote URL of the rendered PNG for the current viewport */
  imageUrl: string;
  /** CRS extent the image spans: [minX, minY, maxX, maxY] */
  extent: [number, number, number, number];
}

export interface WorkbenchState {
  sessionId: string | null;
  stateHash: string | null;
  complete: boolean;
  viewport: Viewport;
  regions: RegionEntry[];
  aliases: AliasEntry[];
  features: FeatureEntry[];
  operation: { kind: "cluster"; k: number; seed: number } | {
    kind: "similarity";
    metric: "euclidean" | "manhattan" | "cosine";
    standardize: boolean;
  };
  jobs: JobEntry[];
  overlays: OverlayEntry[];
  /** feedback for the alias/feature editors: message + offset underline */
  editorError: { scope: "alias" | "feature"; message: string; offset: number | null } | null;
}

export function initialState(): WorkbenchState {
  return {
    sessionId: null,
    stateHash: null,
    complete: false,
    viewport: { centerX: 0, centerY: 0, unitsPerPixel: 1, widthPx: 800, heightPx: 600 },
    regions: [],
    aliases: [],
    features: [],
    operation: { kind: "cluster", k: 5, seed: 0 },
    jobs: [],
    overlays: [],
    editorError: null,
  };
}

export type Listener = (state: WorkbenchState) => void;

export class Store {
  private state: WorkbenchState;
  private listeners: Listener[] = [];

  constructor(state: WorkbenchState = initialState()) {
    this.state = state;
  }

  get(): WorkbenchState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  update(mutate: (draft: WorkbenchState) => WorkbenchState): void {
    this.state = mutate(this.state);
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }
}

/** Assign a geometry to a role; an identical geometry under the other role
 * is re-tagged, and any previous geometry of the role is replaced. */
export function setRegion(state: WorkbenchState, entry: RegionEntry): WorkbenchState {
  const sameGeometry = (a: RegionEntry, b: RegionEntry) =>
    JSON.stringify(a.rings) === JSON.stringify(b.rings);
  const regions = state.regions
    .filter((r) => r.role !== entry.role)
    .filter((r) => !sameGeometry(r, entry));
  return { ...state, regions: [...regions, entry] };
}

export function removeRegion(state: WorkbenchState, role: Role): WorkbenchState {
  return { ...state, regions: state.regions.filter((r) => r.role !== role) };
}

export function upsertAlias(state: WorkbenchState, entry: AliasEntry): WorkbenchState {
  const aliases = state.aliases.filter((a) => a.name !== entry.name);
  return { ...state, aliases: [...aliases, entry], editorError: null };
}

export function removeAlias(state: WorkbenchState, name: string): WorkbenchState {
  return { ...state, aliases: state.aliases.filter((a) => a.name !== name) };
}

export function upsertFeature(state: WorkbenchState, entry: FeatureEntry): WorkbenchState {
  const features = state.features.filter((f) => f.name !== entry.name);
  return { ...state, features: [...features, entry], editorError: null };
}

export function removeFeature(state: WorkbenchState, name: string): WorkbenchState {
  return { ...state, features: state.features.filter((f) => f.name !== name) };
}

export function upsertJob(state: WorkbenchState, job: JobEntry): WorkbenchState {
  const jobs = state.jobs.filter((j) => j.id !== job.id);
  return { ...state, jobs: [...jobs, job] };
}

export function setOverlay(state: WorkbenchState, overlay: OverlayEntry): WorkbenchState {
  const overlays = state.overlays.filter((o) => o.layer !== overlay.layer);
  return { ...state, overlays: [...overlays, overlay] };
}

export function clearOverlay(state: WorkbenchState, layer: string): WorkbenchState {
  return { ...state, overlays: state.overlays.filter((o) => o.layer !== layer) };
}

/** Submit preconditions, mirroring the server's 409 rules so the run
 * button can be disabled with a reason instead of provoking the error. */
export function runDisabledReason(state: WorkbenchState): string | null {
  if (!state.sessionId) return "no session";
  if (!state.regions.some((r) => r.role === "query")) return "draw or upload a query region";
  if (state.features.length === 0) return "define at least one feature";
  if (state.operation.kind === "similarity" && !state.regions.some((r) => r.role === "reference")) {
    return "similarity needs a reference region";
  }
  return null;
}

export function regionBounds(regions: RegionEntry[]): [number, number, number, number] | null {
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const region of regions) {
    for (const ring of region.rings) {
      for (const [x, y] of ring) {
        minX = Math.min(minX, x);
        minY = Math.min(minY, y);
        maxX = Math.max(maxX, x);
        maxY = Math.max(maxY, y);
      }
    }
  }
  return Number.isFinite(minX) ? [minX, minY, maxX, maxY] : null;
}
