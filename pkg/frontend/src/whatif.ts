/** Side-by-side comparison for the what-if panel. */

import { PredictResponse } from "./types.js";

export interface WhatIfComparison {
  riskBefore: number;
  riskAfter: number;
  riskDelta: number;
  leafBefore: number;
  leafAfter: number;
  leafChanged: boolean;
  setBefore: number[];
  setAfter: number[];
  setChanged: boolean;
}

export function compareResponses(
  before: PredictResponse,
  after: PredictResponse,
): WhatIfComparison {
  const setBefore = [...before.prediction_set].sort();
  const setAfter = [...after.prediction_set].sort();
  return {
    riskBefore: before.risk,
    riskAfter: after.risk,
    riskDelta: after.risk - before.risk,
    leafBefore: before.leaf_id,
    leafAfter: after.leaf_id,
    leafChanged: after.leaf_id !== before.leaf_id,
    setBefore,
    setAfter,
    setChanged: JSON.stringify(setBefore) !== JSON.stringify(setAfter),
  };
}

export function describeLeafChange(cmp: WhatIfComparison): string {
  return cmp.leafChanged
    ? `subgroup changed: leaf ${cmp.leafBefore} → leaf ${cmp.leafAfter}`
    : `subgroup unchanged (leaf ${cmp.leafBefore})`;
}
