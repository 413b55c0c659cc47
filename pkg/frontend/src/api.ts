/**
 * Thin /v1 API client. At most one prediction request is in flight: a new
 * submission aborts the previous one, so a slow early answer can never
 * overwrite a newer one.
 */

import { ModelInfo, PredictResponse, RecordPayload } from "./types.js";

export interface PredictClient {
  predict(payload: RecordPayload): Promise<PredictResponse>;
  modelInfo(): Promise<ModelInfo>;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly detail: unknown = null,
  ) {
    super(message);
  }
}

export class HttpPredictClient implements PredictClient {
  private inflight: AbortController | null = null;

  constructor(private readonly baseUrl: string = "") {}

  async predict(payload: RecordPayload): Promise<PredictResponse> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const resp = await fetch(`${this.baseUrl}/v1/predict`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(payload),
        signal: controller.signal,
      });
      if (!resp.ok) {
        const detail = await resp.json().catch(() => null);
        throw new ApiError(`predict failed with status ${resp.status}`, resp.status, detail);
      }
      return (await resp.json()) as PredictResponse;
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }

  async modelInfo(): Promise<ModelInfo> {
    const resp = await fetch(`${this.baseUrl}/v1/model`);
    if (!resp.ok) {
      throw new ApiError(`model info failed with status ${resp.status}`, resp.status);
    }
    return (await resp.json()) as ModelInfo;
  }
}
