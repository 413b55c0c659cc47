/**
 * Client-side descent of an exported partition tree. Mirrors the server's
 * documented conventions: ordinal category codes, breadth-first node ids
 * (children of i at 2i+1 / 2i+2), and "go left iff value < threshold".
 * Used to anticipate subgroup changes in the what-if panel without waiting
 * on the network; the server response remains authoritative.
 */

import { RecordPayload } from "./types.js";

export const SHAPE_CODES: Record<string, number> = { oval: 0, round: 1, irregular: 2 };
export const MARGIN_CODES: Record<string, number> = {
  circumscribed: 0, indistinct: 1, angular: 2, microlobulated: 3, spiculated: 4,
};
export const ORIENTATION_CODES: Record<string, number> = { parallel: 0, not_parallel: 1 };

const ORDINAL: Record<string, Record<string, number>> = {
  shape: SHAPE_CODES,
  margins: MARGIN_CODES,
  orientation: ORIENTATION_CODES,
};

export interface TreeExport {
  features: string[];
  max_depth: number;
  min_samples_leaf: number;
  nodes: Record<string, { feature?: string; threshold?: number; mean?: number; count?: number }>;
}

const PAYLOAD_KEY: Record<string, string> = { size: "size_mm" };

export function ordinalValue(feature: string, payload: RecordPayload): number {
  const raw = payload[PAYLOAD_KEY[feature] ?? feature];
  if (feature in ORDINAL) {
    const code = ORDINAL[feature][String(raw)];
    if (code === undefined) throw new Error(`unknown ${feature} value '${String(raw)}'`);
    return code;
  }
  const value = typeof raw === "number" ? raw : Number(String(raw));
  if (Number.isNaN(value)) throw new Error(`non-numeric ${feature} value`);
  return value;
}

export function assignLeaf(tree: TreeExport, payload: RecordPayload): number {
  let nid = 0;
  for (;;) {
    const node = tree.nodes[String(nid)];
    if (node === undefined) throw new Error(`missing node ${nid} in tree export`);
    if (node.threshold === undefined) return nid;
    const value = ordinalValue(node.feature as string, payload);
    nid = value < node.threshold ? 2 * nid + 1 : 2 * nid + 2;
  }
}

export function leafIds(tree: TreeExport): number[] {
  return Object.entries(tree.nodes)
    .filter(([, node]) => node.threshold === undefined)
    .map(([id]) => parseInt(id, 10))
    .sort((a, b) => a - b);
}
