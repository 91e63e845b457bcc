/** Thin typed client over the training-service HTTP API.
 *
 * The fetch implementation is injectable so tests can script the server.
 * Every non-2xx response is surfaced as a ServiceApiError carrying the
 * service's own error code and message verbatim.
 */

import type {
  Answer,
  ResponseResult,
  ServiceErrorBody,
  SessionInfo,
  SummaryPayload,
  TrialPayload,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ServiceApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ServiceApiError";
  }
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, method: string, body?: unknown): Promise<T> {
    let resp;
    try {
      resp = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceApiError(0, "network_error", String(err));
    }
    const payload = (await resp.json()) as T | ServiceErrorBody;
    if (!resp.ok) {
      const e = payload as ServiceErrorBody;
      throw new ServiceApiError(resp.status, e.code ?? "unknown", e.message ?? "request failed");
    }
    return payload as T;
  }

  createSession(condition: string, policy: string, seed: number): Promise<SessionInfo> {
    return this.request<SessionInfo>("/sessions", "POST", {
      condition,
      policy: { policy },
      seed,
    });
  }

  nextTrial(sessionId: string): Promise<TrialPayload> {
    return this.request<TrialPayload>(`/sessions/${sessionId}/next`, "GET");
  }

  submitResponse(sessionId: string, trial: number, answer: Answer): Promise<ResponseResult> {
    return this.request<ResponseResult>(`/sessions/${sessionId}/response`, "POST", {
      trial,
      classification: answer.classification,
      confidence: answer.confidence,
      action: answer.action,
    });
  }

  submitQuestionnaire(sessionId: string, values: number[]): Promise<{ score: number }> {
    return this.request<{ score: number }>(`/sessions/${sessionId}/questionnaire`, "POST", {
      values,
    });
  }

  summary(sessionId: string): Promise<SummaryPayload> {
    return this.request<SummaryPayload>(`/sessions/${sessionId}/summary`, "GET");
  }

  health(): Promise<{ status: string; conditions: string[]; actions: string[] }> {
    return this.request("/healthz", "GET");
  }
}
