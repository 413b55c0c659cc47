/** Shared shapes for the /v1 JSON API and the form. */

export interface PredictResponse {
  risk: number;
  prediction_set: number[];
  leaf_id: number;
  leaf_rule_path: string[];
  cutoff: number;
  alpha: number;
  model_version: string;
}

export interface ModelInfo {
  model_version: string;
  alpha: number;
  leaf_count: number;
  features: string[];
  intercept: number;
  C: number;
  coefficients: Record<string, number>;
  numeric_stats: Record<string, [number, number]>;
}

/** Raw form payload, shaped exactly like the API request body. */
export type RecordPayload = Record<string, unknown>;

export interface FieldError {
  field: string;
  message: string;
}

export const SHAPES = ["oval", "round", "irregular"] as const;
export const MARGINS = [
  "circumscribed",
  "indistinct",
  "angular",
  "microlobulated",
  "spiculated",
] as const;
export const ORIENTATIONS = ["parallel", "not_parallel"] as const;
export const BIRADS_CATEGORIES = ["3", "4a", "4b", "4c", "5"] as const;
export const COHORTS = ["retrospective", "prospective"] as const;
