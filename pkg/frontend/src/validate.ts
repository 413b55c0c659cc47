/**
 * Client-side record validation mirroring the server rules exactly
 * (age >= 18, size in (0, 30], ri >= 0, closed category vocabularies).
 * Parity with the backend validator is pinned by the fixture contract test.
 */

import {
  BIRADS_CATEGORIES,
  COHORTS,
  FieldError,
  MARGINS,
  ORIENTATIONS,
  RecordPayload,
  SHAPES,
} from "./types.js";

const STRING_FIELDS: Array<[string, readonly string[]]> = [
  ["shape", SHAPES],
  ["margins", MARGINS],
  ["orientation", ORIENTATIONS],
  ["birads", BIRADS_CATEGORIES],
  ["cohort", COHORTS],
];

function isBlank(value: unknown): boolean {
  return value === undefined || value === null || (typeof value === "string" && value.trim() === "");
}

function asNumber(value: unknown): number | null {
  if (typeof value === "number") return value;
  if (typeof value === "string") {
    const parsed = Number(value.trim());
    return Number.isNaN(parsed) ? null : parsed;
  }
  return null;
}

/** Integer with the same strictness the server applies to 0/1 flags. */
function asIntFlag(value: unknown): number | null {
  if (typeof value === "number") return Number.isInteger(value) ? value : null;
  if (typeof value === "string" && /^[+-]?\d+$/.test(value.trim())) {
    return parseInt(value.trim(), 10);
  }
  return null;
}

export function validatePayload(payload: RecordPayload): FieldError[] {
  const errors: FieldError[] = [];
  const push = (field: string, message: string) => errors.push({ field, message });

  if (isBlank(payload["id"])) {
    push("id", "missing value for required field 'id'");
  }

  const numericChecks: Array<[string, string, (v: number) => string | null]> = [
    ["age", "age", (v) => (!Number.isFinite(v) ? "age must be finite"
      : v < 18 ? `age ≥ 18 violated (got ${v})` : null)],
    ["size_mm", "size", (v) => (!Number.isFinite(v) ? "size must be finite"
      : v <= 0 ? `size > 0 violated (got ${v})`
      : v > 30 ? `size ≤ 30 violated (got ${v})` : null)],
    ["ri", "ri", (v) => (!Number.isFinite(v) ? "ri must be finite"
      : v < 0 ? `ri ≥ 0 violated (got ${v})` : null)],
  ];
  for (const [key, field, rule] of numericChecks) {
    const raw = payload[key];
    if (isBlank(raw)) {
      push(field, `missing value for required field '${field}'`);
      continue;
    }
    const value = asNumber(raw);
    if (value === null) {
      push(field, `malformed value for field '${field}' (expected a number)`);
      continue;
    }
    const message = rule(value);
    if (message !== null) push(field, message);
  }

  const palpRaw = payload["palpable"];
  if (isBlank(palpRaw)) {
    push("palpable", "missing value for required field 'palpable'");
  } else {
    const palp = asIntFlag(palpRaw);
    if (palp === null || (palp !== 0 && palp !== 1)) {
      push("palpable", "palpable must be 0 or 1");
    }
  }

  for (const [field, vocab] of STRING_FIELDS) {
    const raw = payload[field];
    if (isBlank(raw)) {
      push(field, `missing value for required field '${field}'`);
      continue;
    }
    const value = String(raw).trim();
    if (!vocab.includes(value)) {
      push(field, `unknown ${field} '${value}' (expected one of ${vocab.join(", ")})`);
    }
  }

  return errors;
}

export function isValidPayload(payload: RecordPayload): boolean {
  return validatePayload(payload).length === 0;
}
