/**
 * Client pre-validation parity: structurally mutated templates must be
 * accepted/rejected identically by the client-side validator (built on the
 * shared schema file) and by the live service.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { isTemplateDocValid } from "../src/schema";
import { startService, zonelabAvailable, type ServiceHandle } from "./helpers/service";

const HAVE_SERVICE = zonelabAvailable();

function baseTemplate(): Record<string, unknown> {
  return {
    version: 1,
    name: "parity",
    crs_id: "EPSG:32735",
    target_resolution: 1.0,
    regions: {
      query: {
        type: "Polygon",
        coordinates: [
          [
            [0, 0],
            [64, 0],
            [64, 64],
            [0, 64],
            [0, 0],
          ],
        ],
      },
    },
    aliases: ["a0:synth:b0:01/01/2020:31/12/2020:MEAN"],
    features: ["f0:a0*1"],
    operation: { cluster: { k: 3, seed: 7 } },
  };
}

type Mutation = { label: string; apply: (doc: Record<string, unknown>) => void };

/** Structural mutations: some legal, some schema violations. */
const MUTATIONS: Mutation[] = [
  { label: "identity", apply: () => {} },
  { label: "k=2", apply: (d) => ((d.operation as any).cluster.k = 2) },
  { label: "k=1 (below minimum)", apply: (d) => ((d.operation as any).cluster.k = 1) },
  { label: "k as string", apply: (d) => ((d.operation as any).cluster.k = "3") },
  { label: "unknown top-level field", apply: (d) => (d.mystery = true) },
  { label: "unknown operation field", apply: (d) => ((d.operation as any).cluster.fuzz = 1) },
  { label: "missing name", apply: (d) => delete d.name },
  { label: "empty name", apply: (d) => (d.name = "") },
  { label: "version 2", apply: (d) => (d.version = 2) },
  { label: "negative resolution", apply: (d) => (d.target_resolution = -5) },
  { label: "zero resolution", apply: (d) => (d.target_resolution = 0) },
  { label: "missing regions.query", apply: (d) => ((d.regions as any) = {}) },
  { label: "linestring geometry", apply: (d) => ((d.regions as any).query = { type: "LineString", coordinates: [[0, 0], [1, 1]] }) },
  { label: "two-vertex ring", apply: (d) => ((d.regions as any).query.coordinates = [[[0, 0], [1, 1]]]) },
  { label: "empty operation", apply: (d) => (d.operation = {}) },
  {
    label: "both operations",
    apply: (d) => (d.operation = { cluster: { k: 2 }, similarity: {} }),
  },
  { label: "bad metric", apply: (d) => (d.operation = { similarity: { metric: "chebyshev" } }) },
  {
    label: "similarity without reference (schema-legal, semantically rejected)",
    apply: (d) => (d.operation = { similarity: { metric: "cosine" } }),
  },
  { label: "aliases as string", apply: (d) => (d.aliases = "a0:synth:b0:01/01/2020:31/12/2020:MEAN") },
  { label: "empty alias string", apply: (d) => (d.aliases = [""]) },
  { label: "landcover missing classes", apply: (d) => (d.landcover = { product: "p", band: "b", start: "2020-01-01", end: "2020-12-31" }) },
  { label: "landcover ok", apply: (d) => (d.landcover = { product: "p", band: "b", start: "2020-01-01", end: "2020-12-31", classes: [4] }) },
  { label: "output with unknown key", apply: (d) => (d.output = { raster: "x.tif", verbose: true }) },
  { label: "non-numeric coordinate", apply: (d) => (((d.regions as any).query.coordinates[0][0][0] as unknown) = "zero") },
];

describe("schema validation", () => {
  it("accepts the base template and flags obvious violations", () => {
    expect(isTemplateDocValid(baseTemplate())).toBe(true);
    const broken = baseTemplate();
    (broken.operation as any).cluster.k = 1;
    expect(isTemplateDocValid(broken)).toBe(false);
  });
});

describe.runIf(HAVE_SERVICE)("parity with the live service", () => {
  let service: ServiceHandle;

  beforeAll(async () => {
    service = await startService();
  });

  afterAll(() => service?.stop());

  it("client-side schema verdicts match server PUT verdicts", async () => {
    for (const mutation of MUTATIONS) {
      const doc = baseTemplate();
      mutation.apply(doc);
      const clientOk = isTemplateDocValid(doc);

      const sid = (
        (await (await fetch(`${service.baseUrl}/api/sessions`, { method: "POST" })).json()) as {
          id: string;
        }
      ).id;
      const response = await fetch(`${service.baseUrl}/api/sessions/${sid}/template`, {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(doc),
      });
      const serverOk = response.ok;

      if (clientOk && !serverOk) {
        // The client validates structure only; the server may still reject
        // for semantic reasons (DSL strings, similarity/reference pairing).
        // That direction is allowed; the reverse is a parity bug.
        const body = (await response.json()) as { code: string };
        expect(["schema_error", "dsl_error", "unknown_alias"]).toContain(body.code);
        expect(response.status).toBe(422);
      } else {
        expect(serverOk, `${mutation.label}: client=${clientOk} server=${serverOk}`).toBe(clientOk);
      }
    }
  });

  it("no schema-valid UI action is rejected by the server for schema reasons", async () => {
    // every mutation the client accepts and submits must not bounce with a
    // *structural* schema error (field path starting at $ with no DSL hint)
    for (const mutation of MUTATIONS) {
      const doc = baseTemplate();
      mutation.apply(doc);
      if (!isTemplateDocValid(doc)) continue;
      const sid = (
        (await (await fetch(`${service.baseUrl}/api/sessions`, { method: "POST" })).json()) as {
          id: string;
        }
      ).id;
      const response = await fetch(`${service.baseUrl}/api/sessions/${sid}/template`, {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(doc),
      });
      if (!response.ok) {
        const body = (await response.json()) as { message: string };
        expect(body.message).toMatch(/parse|reference|duplicate/);
      }
    }
  });
});
