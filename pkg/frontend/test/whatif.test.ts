/**
 * What-if behavior against a real bundle export: crossing a split threshold
 * taken from the exported tree must surface a leaf change in the comparison,
 * and an identical re-query must compare equal. The stub client descends the
 * exported tree with the same convention the server documents.
 */

import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import test from "node:test";

import { assignLeaf, leafIds, TreeExport } from "../src/tree.js";
import { compareResponses, describeLeafChange } from "../src/whatif.js";
import { PredictResponse, RecordPayload } from "../src/types.js";

const bundleExport = JSON.parse(
  readFileSync(new URL("../../test/fixtures/bundle_export.json", import.meta.url), "utf-8"),
);
const tree: TreeExport = bundleExport.tree;

const base: RecordPayload = {
  id: "w", age: 45, size_mm: 14, ri: 0.2, palpable: 0, shape: "oval",
  margins: "circumscribed", orientation: "parallel", birads: "4a", cohort: "prospective",
};

/** Offline stand-in for the API: leaf from the exported tree, fixed risk map. */
function stubPredict(payload: RecordPayload): PredictResponse {
  const leaf = assignLeaf(tree, payload);
  return {
    risk: 0.1 + 0.2 * (leafIds(tree).indexOf(leaf) % 4),
    prediction_set: [0],
    leaf_id: leaf,
    leaf_rule_path: [],
    cutoff: 0.4,
    alpha: bundleExport.alpha,
    model_version: bundleExport.model_version,
  };
}

function rootSplit(): { feature: string; threshold: number } {
  const root = tree.nodes["0"];
  assert.ok(root.threshold !== undefined, "fixture tree must have at least one split");
  return { feature: root.feature as string, threshold: root.threshold as number };
}

test("identical re-query compares equal (API determinism mirrored)", () => {
  const a = stubPredict(base);
  const b = stubPredict({ ...base });
  const cmp = compareResponses(a, b);
  assert.equal(cmp.leafChanged, false);
  assert.equal(cmp.riskDelta, 0);
  assert.equal(cmp.setChanged, false);
  assert.match(describeLeafChange(cmp), /unchanged/);
});

test("crossing a known tree threshold changes the leaf in the comparison", () => {
  const { feature, threshold } = rootSplit();
  const key = feature === "size" ? "size_mm" : feature;
  const below = { ...base, [key]: threshold - 0.01 };
  const above = { ...base, [key]: threshold + 0.01 };
  assert.notEqual(assignLeaf(tree, below), assignLeaf(tree, above));

  const cmp = compareResponses(stubPredict(below), stubPredict(above));
  assert.equal(cmp.leafChanged, true);
  assert.match(describeLeafChange(cmp), /subgroup changed: leaf \d+ → leaf \d+/);
});

test("exact threshold value routes to the right child, mirroring the server", () => {
  const { feature, threshold } = rootSplit();
  const key = feature === "size" ? "size_mm" : feature;
  const atThreshold = assignLeaf(tree, { ...base, [key]: threshold });
  const above = assignLeaf(tree, { ...base, [key]: threshold + 0.01 });
  const wayBelow = assignLeaf(tree, { ...base, [key]: threshold - 1.0 });
  assert.equal(atThreshold, above);
  assert.notEqual(atThreshold, wayBelow);
});

test("every leaf id from the export is reachable", () => {
  const ids = leafIds(tree);
  assert.ok(ids.length >= 2);
  for (const id of ids) {
    assert.ok(tree.nodes[String(id)].mean !== undefined);
  }
});
