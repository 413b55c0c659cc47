/**
 * DOM wiring for the clinician UI: lesion form on the left, prediction and
 * what-if panels on the right. Nothing the user types is persisted beyond
 * the page session.
 */

import { ApiError, HttpPredictClient } from "./api.js";
import { errorsFor, initialForm, recordResponse, updateField, whatIfPayload } from "./form.js";
import { renderPrediction } from "./render.js";
import { compareResponses, describeLeafChange } from "./whatif.js";
import { BIRADS_CATEGORIES, COHORTS, MARGINS, ModelInfo, ORIENTATIONS, SHAPES } from "./types.js";

const client = new HttpPredictClient("");
let form = initialForm();
let modelInfo: ModelInfo | null = null;

const $ = (id: string) => document.getElementById(id) as HTMLElement;

const SELECTS: Array<[string, readonly string[]]> = [
  ["shape", SHAPES],
  ["margins", MARGINS],
  ["orientation", ORIENTATIONS],
  ["birads", BIRADS_CATEGORIES],
  ["cohort", COHORTS],
];

function buildForm(): void {
  for (const [field, vocab] of SELECTS) {
    const select = $(`f-${field}`) as HTMLSelectElement;
    select.innerHTML =
      `<option value="">choose…</option>` +
      vocab.map((v) => `<option value="${v}">${v}</option>`).join("");
  }
}

function refreshValidation(): void {
  for (const field of ["age", "size", "ri", "palpable", "shape", "margins",
                       "orientation", "birads", "cohort"]) {
    const slot = document.getElementById(`err-${field}`);
    if (slot) slot.textContent = errorsFor(form, field).join("; ");
  }
  ($("submit") as HTMLButtonElement).disabled = !form.submitEnabled;
}

function onEdit(field: string, raw: unknown): void {
  form = updateField(form, field, raw);
  refreshValidation();
}

function showError(message: string): void {
  $("banner").textContent = message;
  $("banner").classList.remove("hidden");
  $("result").classList.add("hidden");       // no stale result beside an error
  $("whatif-result").innerHTML = "";
}

function clearError(): void {
  $("banner").classList.add("hidden");
}

function renderResult(): void {
  if (!form.lastResponse || !form.lastPayload || !modelInfo) return;
  const view = renderPrediction(form.lastResponse, modelInfo, form.lastPayload);
  const panel = $("result");
  panel.className = view.cssClass;
  panel.classList.remove("hidden");
  $("headline").textContent = view.headline;
  $("risk").textContent = `estimated malignancy risk ${view.riskPct}`;
  $("cutoff-marker").textContent =
    `decision cutoff for this subgroup: probability ≥ ${view.cutoff.toFixed(3)} stays in the set`;
  $("alpha-note").textContent =
    `prediction set target coverage ${view.coveragePct} (α fixed by the calibrated bundle)`;
  $("leaf").textContent = `subgroup: leaf ${view.leafId}`;
  $("rules").innerHTML = view.rulePath.length
    ? view.rulePath.map((c) => `<li>${c}</li>`).join("")
    : "<li>(single subgroup: the tree has one leaf)</li>";
  $("features").innerHTML = view.topFeatures
    .map((f) => `<li>${f.column}: weight ${f.weight.toFixed(3)} × value ${f.encoded.toFixed(3)}` +
                ` → ${f.contribution.toFixed(3)}</li>`)
    .join("");
}

async function submit(): Promise<void> {
  if (!form.submitEnabled) return;
  const payload = { ...form.values };
  try {
    const resp = await client.predict(payload);
    clearError();
    form = recordResponse(form, payload, resp);
    renderResult();
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") return;
    showError(err instanceof ApiError ? apiErrorText(err) : "prediction request failed");
  }
}

function apiErrorText(err: ApiError): string {
  const detail = err.detail as { detail?: Array<{ field: string; message: string }> } | null;
  if (detail?.detail?.length) {
    return detail.detail.map((d) => `${d.field}: ${d.message}`).join("; ");
  }
  return err.message;
}

async function runWhatIf(): Promise<void> {
  const field = ($("wi-field") as HTMLSelectElement).value;
  const raw = ($("wi-value") as HTMLInputElement).value;
  const key = field === "size" ? "size_mm" : field;
  const probe = whatIfPayload(form, key, raw);
  const slot = $("whatif-result");
  if (!probe.payload) {
    slot.innerHTML = `<p class="error">${probe.errors.map((e) => e.message).join("; ")}</p>`;
    return;                                   // invalid probe: no request issued
  }
  try {
    const before = form.lastResponse!;
    const after = await client.predict(probe.payload);
    const cmp = compareResponses(before, after);
    slot.innerHTML = `
      <table>
        <tr><th></th><th>current</th><th>what-if</th></tr>
        <tr><td>risk</td><td>${(cmp.riskBefore * 100).toFixed(1)}%</td>
            <td>${(cmp.riskAfter * 100).toFixed(1)}%</td></tr>
        <tr><td>set</td><td>{${cmp.setBefore.join(", ")}}</td>
            <td>{${cmp.setAfter.join(", ")}}</td></tr>
        <tr><td>leaf</td><td>${cmp.leafBefore}</td><td>${cmp.leafAfter}</td></tr>
      </table>
      <p>${describeLeafChange(cmp)}</p>`;
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") return;
    showError("what-if request failed");
  }
}

export function boot(): void {
  buildForm();
  for (const [field, key] of [["age", "age"], ["size", "size_mm"], ["ri", "ri"]]) {
    const input = $(`f-${field}`) as HTMLInputElement;
    input.addEventListener("input", () => onEdit(key, input.value));
  }
  const palp = $("f-palpable") as HTMLSelectElement;
  palp.addEventListener("change", () => onEdit("palpable", palp.value));
  for (const [field] of SELECTS) {
    const select = $(`f-${field}`) as HTMLSelectElement;
    select.addEventListener("change", () => onEdit(field, select.value));
  }
  ($("submit") as HTMLButtonElement).addEventListener("click", () => void submit());
  ($("wi-run") as HTMLButtonElement).addEventListener("click", () => void runWhatIf());
  refreshValidation();
  client
    .modelInfo()
    .then((info) => {
      modelInfo = info;
      $("model-note").textContent =
        `model ${info.model_version} · ${info.leaf_count} subgroups · α=${info.alpha}`;
    })
    .catch(() => showError("could not reach the inference service"));
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
