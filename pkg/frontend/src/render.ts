/**
 * Pure view-model construction for a prediction. The point risk is never
 * shown without its prediction set: the guarantee lives in the set, so both
 * always travel together in one view model.
 */

import { ModelInfo, PredictResponse, RecordPayload } from "./types.js";

export type SetState = "benign" | "malignant" | "uncertain" | "abstain";

export interface FeatureContribution {
  column: string;
  weight: number;
  encoded: number;
  contribution: number; // weight * encoded value
}

export interface PredictionView {
  state: SetState;
  cssClass: string;
  headline: string;
  riskPct: string;
  coveragePct: string;
  cutoff: number;
  leafId: number;
  rulePath: string[];
  topFeatures: FeatureContribution[];
  modelVersion: string;
}

export function setState(predictionSet: number[]): SetState {
  const has0 = predictionSet.includes(0);
  const has1 = predictionSet.includes(1);
  if (has0 && has1) return "uncertain";
  if (has1) return "malignant";
  if (has0) return "benign";
  return "abstain";
}

function headlineFor(state: SetState, coveragePct: string): string {
  switch (state) {
    case "benign":
      return `benign — high confidence (singleton set at ${coveragePct} coverage)`;
    case "malignant":
      return `malignant — high confidence (singleton set at ${coveragePct} coverage)`;
    case "uncertain":
      return `uncertain — both outcomes plausible at ${coveragePct} coverage`;
    case "abstain":
      return "model abstains — no label clears this subgroup's cutoff";
  }
}

/** Replicates the server's encoding for one model column. */
export function encodedValue(column: string, payload: RecordPayload, model: ModelInfo): number {
  const eq = column.indexOf("=");
  if (eq >= 0) {
    const feature = column.slice(0, eq);
    const category = column.slice(eq + 1);
    return String(payload[feature]) === category ? 1 : 0;
  }
  if (column === "palpable") {
    return Number(payload["palpable"]);
  }
  const stats = model.numeric_stats[column];
  const raw = Number(payload[column === "size" ? "size_mm" : column]);
  if (!stats) return raw;
  const [mean, sd] = stats;
  return (raw - mean) / sd;
}

export function topContributions(
  payload: RecordPayload,
  model: ModelInfo,
  k = 3,
): FeatureContribution[] {
  const rows: FeatureContribution[] = Object.entries(model.coefficients).map(
    ([column, weight]) => {
      const encoded = encodedValue(column, payload, model);
      return { column, weight, encoded, contribution: weight * encoded };
    },
  );
  rows.sort((a, b) => Math.abs(b.contribution) - Math.abs(a.contribution));
  return rows.slice(0, k);
}

export function renderPrediction(
  resp: PredictResponse,
  model: ModelInfo,
  payload: RecordPayload,
): PredictionView {
  const state = setState(resp.prediction_set);
  const coveragePct = `${Math.round((1 - resp.alpha) * 100)}%`;
  return {
    state,
    cssClass: `prediction prediction--${state}`,
    headline: headlineFor(state, coveragePct),
    riskPct: `${(resp.risk * 100).toFixed(1)}%`,
    coveragePct,
    cutoff: resp.cutoff,
    leafId: resp.leaf_id,
    rulePath: [...resp.leaf_rule_path],
    topFeatures: topContributions(payload, model),
    modelVersion: resp.model_version,
  };
}

/** Error banner view; rendered instead of (never beside) a stale result. */
export interface ErrorBanner {
  kind: "error";
  message: string;
}

export function renderError(message: string): ErrorBanner {
  return { kind: "error", message: message || "request failed" };
}
