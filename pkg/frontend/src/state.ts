/** Session flow state machine.
 *
 * Mirrors the server's block structure so illegal transitions are
 * unrepresentable: a trial can only be answered while it is the pending
 * state, feedback exists only after a TRAIN response, the questionnaire
 * only after the last trial, the summary only after the questionnaire.
 *
 * Network failures keep the unsent answer in state so `retry()` can resend
 * it; the submit path refuses re-entry while a request is in flight
 * (double-submit protection).
 */

import { ServiceApiError, ServiceClient } from "./api.js";
import type {
  Answer,
  ResponseResult,
  SummaryPayload,
  TrialPayload,
} from "./types.js";

export type FlowState =
  | { kind: "idle" }
  | { kind: "loading"; points: number }
  | {
      kind: "trial";
      trial: TrialPayload;
      points: number;
      submitting: boolean;
      unsent: Answer | null;
      error: string | null;
    }
  | { kind: "feedback"; trial: TrialPayload; result: ResponseResult; points: number }
  | { kind: "questionnaire"; points: number; submitting: boolean; error: string | null }
  | { kind: "summary"; summary: SummaryPayload }
  | { kind: "fatal"; error: string };

export type Listener = (state: FlowState) => void;

export class SessionFlow {
  private state: FlowState = { kind: "idle" };
  private sessionId = "";
  private listeners: Listener[] = [];

  constructor(private readonly client: ServiceClient) {}

  get current(): FlowState {
    return this.state;
  }

  get session(): string {
    return this.sessionId;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private set(state: FlowState): void {
    this.state = state;
    for (const fn of this.listeners) fn(state);
  }

  async start(condition: string, policy: string, seed: number): Promise<void> {
    if (this.state.kind !== "idle") return;
    this.set({ kind: "loading", points: 0 });
    try {
      const info = await this.client.createSession(condition, policy, seed);
      this.sessionId = info.session_id;
      await this.advance(0);
    } catch (err) {
      this.set({ kind: "fatal", error: describe(err) });
    }
  }

  /** Fetch the next trial, or move to the questionnaire when done. */
  private async advance(points: number): Promise<void> {
    this.set({ kind: "loading", points });
    try {
      const trial = await this.client.nextTrial(this.sessionId);
      this.set({ kind: "trial", trial, points, submitting: false, unsent: null, error: null });
    } catch (err) {
      if (err instanceof ServiceApiError && err.code === "session_complete") {
        this.set({ kind: "questionnaire", points, submitting: false, error: null });
        return;
      }
      this.set({ kind: "fatal", error: describe(err) });
    }
  }

  /** Submit the answer for the pending trial. No-op while a submit is in
   * flight or outside the trial state. */
  async submit(answer: Answer): Promise<void> {
    const s = this.state;
    if (s.kind !== "trial" || s.submitting) return;
    this.set({ ...s, submitting: true, unsent: answer, error: null });
    let result: ResponseResult;
    try {
      result = await this.client.submitResponse(this.sessionId, s.trial.trial, answer);
    } catch (err) {
      if (err instanceof ServiceApiError && err.status === 0) {
        // network failure: keep the answer for retry
        this.set({ ...s, submitting: false, unsent: answer, error: describe(err) });
      } else {
        this.set({ kind: "fatal", error: describe(err) });
      }
      return;
    }
    const points = result.cumulative_points;
    if (result.feedback !== null) {
      this.set({ kind: "feedback", trial: s.trial, result, points });
    } else {
      await this.advance(points);
    }
  }

  /** Resend the preserved answer after a network failure. */
  async retry(): Promise<void> {
    const s = this.state;
    if (s.kind !== "trial" || s.unsent === null || s.submitting) return;
    await this.submit(s.unsent);
  }

  /** Leave the TRAIN feedback panel for the next trial. */
  async continueAfterFeedback(): Promise<void> {
    const s = this.state;
    if (s.kind !== "feedback") return;
    await this.advance(s.points);
  }

  async submitQuestionnaire(values: number[]): Promise<void> {
    const s = this.state;
    if (s.kind !== "questionnaire" || s.submitting) return;
    if (values.length !== 4 || values.some((v) => v < 0 || v > 100)) {
      this.set({ ...s, error: "four answers between 0 and 100 required" });
      return;
    }
    this.set({ ...s, submitting: true, error: null });
    try {
      await this.client.submitQuestionnaire(this.sessionId, values);
      const summary = await this.client.summary(this.sessionId);
      this.set({ kind: "summary", summary });
    } catch (err) {
      if (err instanceof ServiceApiError && err.status === 0) {
        this.set({ ...s, submitting: false, error: describe(err) });
      } else {
        this.set({ kind: "fatal", error: describe(err) });
      }
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ServiceApiError) {
    return err.status === 0 ? `network failure: ${err.message}` : `${err.code}: ${err.message}`;
  }
  return String(err);
}
