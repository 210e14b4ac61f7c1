import type { ActionOutcome, QuestionnaireAnswers, SessionInfo, StepPayload } from "./types.js";

/** Thin client for the game service; all game math stays on the server. */
export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.baseUrl + path, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!res.ok) {
      const body = await res.text();
      throw new ApiError(res.status, body || res.statusText);
    }
    return (await res.json()) as T;
  }

  createSession(orderHint?: string): Promise<SessionInfo> {
    return this.request("/sessions", {
      method: "POST",
      body: JSON.stringify(orderHint ? { order_hint: orderHint } : {}),
    });
  }

  getStep(sessionId: string): Promise<StepPayload> {
    return this.request(`/sessions/${sessionId}/step`);
  }

  postAction(sessionId: string, dx: number, dy: number, step: number): Promise<ActionOutcome> {
    return this.request(`/sessions/${sessionId}/action`, {
      method: "POST",
      body: JSON.stringify({ dx, dy, step }),
    });
  }

  postQuestionnaire(
    sessionId: string,
    answers: QuestionnaireAnswers,
  ): Promise<{ ok: boolean; session_complete: boolean }> {
    return this.request(`/sessions/${sessionId}/questionnaire`, {
      method: "POST",
      body: JSON.stringify(answers),
    });
  }
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}
