/**
 * Client-side template pre-validation against the shared schema file (the
 * same document the service validates with), so no UI action can produce a
 * request the server rejects for schema reasons.
 */

import Ajv2020, { type ErrorObject } from "ajv/dist/2020";
import templateSchema from "../schema/template.schema.json";

const ajv = new Ajv2020({ allErrors: true, strict: false });
const compiled = ajv.compile(templateSchema);

export interface SchemaIssue {
  path: string;
  message: string;
}

export function validateTemplateDoc(doc: unknown): SchemaIssue[] {
  if (compiled(doc)) {
    return [];
  }
  const errors = (compiled.errors ?? []) as ErrorObject[];
  return errors.map((e) => ({
    path: "$" + (e.instancePath || "").replace(/\//g, "."),
    message: e.message ?? "invalid",
  }));
}

export function isTemplateDocValid(doc: unknown): boolean {
  return validateTemplateDoc(doc).length === 0;
}
