/**
 * Form state machine. Validation runs on every edit and the submit action
 * stays disabled until the payload would be accepted by the server; a
 * what-if edit that fails validation shows inline errors and never issues
 * a request.
 */

import { validatePayload } from "./validate.js";
import { FieldError, PredictResponse, RecordPayload } from "./types.js";

export interface FormState {
  values: RecordPayload;
  errors: FieldError[];
  submitEnabled: boolean;
  alpha: number | null; // displayed, fixed by the bundle, never editable
  lastResponse: PredictResponse | null;
  lastPayload: RecordPayload | null;
}

export function initialForm(): FormState {
  const values: RecordPayload = {
    id: "webui-session",
    age: "",
    size_mm: "",
    ri: "",
    palpable: "",
    shape: "",
    margins: "",
    orientation: "",
    birads: "",
    cohort: "prospective",
  };
  return {
    values,
    errors: validatePayload(values),
    submitEnabled: false,
    alpha: null,
    lastResponse: null,
    lastPayload: null,
  };
}

export function updateField(state: FormState, field: string, raw: unknown): FormState {
  const values = { ...state.values, [field]: raw };
  const errors = validatePayload(values);
  return { ...state, values, errors, submitEnabled: errors.length === 0 };
}

export function errorsFor(state: FormState, field: string): string[] {
  return state.errors.filter((e) => e.field === field).map((e) => e.message);
}

export function recordResponse(
  state: FormState,
  payload: RecordPayload,
  resp: PredictResponse,
): FormState {
  return { ...state, lastResponse: resp, lastPayload: payload, alpha: resp.alpha };
}

/** Payload for a what-if probe, or null (with errors) when it would be rejected. */
export function whatIfPayload(
  state: FormState,
  field: string,
  raw: unknown,
): { payload: RecordPayload | null; errors: FieldError[] } {
  if (state.lastPayload === null) {
    return { payload: null, errors: [{ field, message: "run a prediction first" }] };
  }
  const payload = { ...state.lastPayload, [field]: raw };
  const errors = validatePayload(payload);
  return { payload: errors.length === 0 ? payload : null, errors };
}
