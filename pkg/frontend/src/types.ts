/**
 * Shared types mirroring the service's JSON bodies.
 */

export type Role = "query" | "reference";

export interface GeoJsonGeometry {
  type: "Polygon" | "MultiPolygon";
  coordinates: unknown;
}

export interface ClusterOperation {
  k: number;
  seed?: number;
  max_iters?: number;
  rel_tol?: number;
  standardize?: boolean;
}

export interface SimilarityOperation {
  metric?: "euclidean" | "manhattan" | "cosine";
  standardize?: boolean;
}

export type Operation = { cluster: ClusterOperation } | { similarity: SimilarityOperation };

export interface TemplateDoc {
  version: 1;
  name: string;
  crs_id: string;
  target_resolution: number;
  regions: { query: GeoJsonGeometry; reference?: GeoJsonGeometry };
  landcover?: {
    product: string;
    band: string;
    start: string;
    end: string;
    classes: number[];
  };
  aliases: string[];
  features: string[];
  operation: Operation;
  output?: { raster?: string; report?: string };
}

export interface SessionSummary {
  id: string;
  created_at: string;
  name: string;
  crs_id: string;
  target_resolution: number | null;
  regions: Role[];
  aliases: string[];
  features: string[];
  operation: Operation | null;
  landcover: TemplateDoc["landcover"] | null;
  complete: boolean;
  state_hash: string;
}

export interface AliasEcho {
  alias: {
    name: string;
    product_id: string;
    band: string;
    start: string;
    end: string;
    agg: string;
  };
  canonical: string;
}

export interface FeatureEcho {
  feature: { name: string };
  canonical: string;
}

export interface BandStats {
  count: number;
  min: number;
  max: number;
  mean: number;
  std: number;
  histogram: number[];
  bin_edges: number[];
}

export interface ProductInfo {
  product_id: string;
  bands: string[];
  start: string;
  end: string;
  kinds: Record<string, string>;
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface JobStatus {
  id: string;
  session_id: string;
  kind: string;
  status: JobState;
  progress: number;
  error?: { code: string; message: string; field?: string };
  result?: {
    kind: "cluster_map" | "similarity_map";
    feature_names: string[];
    config: Record<string, unknown>;
  };
}

export interface StructuredError {
  code: string;
  message: string;
  field?: string;
}
