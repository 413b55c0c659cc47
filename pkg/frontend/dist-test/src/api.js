/**
 * Thin /v1 API client. At most one prediction request is in flight: a new
 * submission aborts the previous one, so a slow early answer can never
 * overwrite a newer one.
 */
export class ApiError extends Error {
    status;
    detail;
    constructor(message, status, detail = null) {
        super(message);
        this.status = status;
        this.detail = detail;
    }
}
export class HttpPredictClient {
    baseUrl;
    inflight = null;
    constructor(baseUrl = "") {
        this.baseUrl = baseUrl;
    }
    async predict(payload) {
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
            return (await resp.json());
        }
        finally {
            if (this.inflight === controller)
                this.inflight = null;
        }
    }
    async modelInfo() {
        const resp = await fetch(`${this.baseUrl}/v1/model`);
        if (!resp.ok) {
            throw new ApiError(`model info failed with status ${resp.status}`, resp.status);
        }
        return (await resp.json());
    }
}
