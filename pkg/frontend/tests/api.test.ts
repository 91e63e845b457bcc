import { describe, expect, it } from "vitest";

import { ServiceApiError, ServiceClient } from "../src/api.js";
import type { FetchLike } from "../src/api.js";

type Call = { url: string; method?: string; body?: string };

function recordingFetch(status: number, payload: unknown) {
  const calls: Call[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    calls.push({ url, method: init?.method, body: init?.body });
    return { ok: status < 400, status, json: async () => payload };
  };
  return { calls, fetchImpl };
}

describe("service client", () => {
  it("posts session creation with condition, policy, and seed", async () => {
    const { calls, fetchImpl } = recordingFetch(200, {
      session_id: "abc",
      condition: "gpt4/styled",
      total_trials: 60,
      actions: ["report"],
    });
    const client = new ServiceClient("http://svc", fetchImpl);
    const info = await client.createSession("gpt4/styled", "ibl", 42);
    expect(info.session_id).toBe("abc");
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://svc/sessions");
    expect(calls[0].method).toBe("POST");
    expect(JSON.parse(calls[0].body!)).toEqual({
      condition: "gpt4/styled",
      policy: { policy: "ibl" },
      seed: 42,
    });
  });

  it("fetches the next trial with GET and no body", async () => {
    const trial = {
      trial: 1,
      block: "PRE",
      total_trials: 60,
      email: { id: "e1", subject: "s", sender: "a@b", body_plain: "t" },
    };
    const { calls, fetchImpl } = recordingFetch(200, trial);
    const client = new ServiceClient("", fetchImpl);
    expect(await client.nextTrial("abc")).toEqual(trial);
    expect(calls[0].url).toBe("/sessions/abc/next");
    expect(calls[0].method).toBe("GET");
    expect(calls[0].body).toBeUndefined();
  });

  it("serializes the answer fields in the response body", async () => {
    const { calls, fetchImpl } = recordingFetch(200, {
      trial: 3,
      block: "TRAIN",
      feedback: { correct: true, points: 1 },
      cumulative_points: 1,
      completed: false,
    });
    const client = new ServiceClient("", fetchImpl);
    await client.submitResponse("abc", 3, {
      classification: "ham",
      confidence: 2,
      action: "delete",
    });
    expect(JSON.parse(calls[0].body!)).toEqual({
      trial: 3,
      classification: "ham",
      confidence: 2,
      action: "delete",
    });
  });

  it("carries the service error code and message verbatim", async () => {
    const { fetchImpl } = recordingFetch(409, {
      code: "trial_pending",
      message: "answer trial 7 first",
    });
    const client = new ServiceClient("", fetchImpl);
    const err = await client.nextTrial("abc").catch((e) => e);
    expect(err).toBeInstanceOf(ServiceApiError);
    expect(err.status).toBe(409);
    expect(err.code).toBe("trial_pending");
    expect(err.message).toBe("answer trial 7 first");
  });

  it("maps a thrown fetch to status 0 network_error", async () => {
    const fetchImpl: FetchLike = async () => {
      throw new TypeError("Failed to fetch");
    };
    const client = new ServiceClient("", fetchImpl);
    const err = await client.health().catch((e) => e);
    expect(err).toBeInstanceOf(ServiceApiError);
    expect(err.status).toBe(0);
    expect(err.code).toBe("network_error");
    expect(err.message).toContain("Failed to fetch");
  });

  it("falls back to a generic code when the error body is not structured", async () => {
    const { fetchImpl } = recordingFetch(500, { detail: "boom" });
    const client = new ServiceClient("", fetchImpl);
    const err = await client.summary("abc").catch((e) => e);
    expect(err.code).toBe("unknown");
    expect(err.message).toBe("request failed");
  });

  it("posts questionnaire values as given", async () => {
    const { calls, fetchImpl } = recordingFetch(200, { score: 25 });
    const client = new ServiceClient("", fetchImpl);
    const res = await client.submitQuestionnaire("abc", [10, 20, 30, 40]);
    expect(res.score).toBe(25);
    expect(calls[0].url).toBe("/sessions/abc/questionnaire");
    expect(JSON.parse(calls[0].body!)).toEqual({ values: [10, 20, 30, 40] });
  });
});
