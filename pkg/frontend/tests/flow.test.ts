import { beforeEach, describe, expect, it, vi } from "vitest";
import { App } from "../src/main.js";
import { ApiClient } from "../src/api.js";
import { COMPREHENSION } from "../src/instructions.js";
import type { StepPayload } from "../src/types.js";
import composedFixture from "./fixtures/composed_step.json";
import saliencyFixture from "./fixtures/saliency_step.json";
import sessionInfo from "./fixtures/session_info.json";

const composed = composedFixture as unknown as StepPayload;
const saliency = saliencyFixture as unknown as StepPayload;

/** In-memory stand-in for the game service, driven by the fixtures. */
class FixtureService {
  step = 0;
  trial = 0;
  posted: unknown[] = [];
  questionnaires: unknown[] = [];

  payload(): StepPayload {
    const base = this.trial === 0 ? composed : saliency;
    return { ...base, step: this.step, trial_index: this.trial };
  }

  client(): ApiClient {
    const api = new ApiClient("");
    api.createSession = async () => sessionInfo as never;
    api.getStep = async () => this.payload();
    api.postAction = async (_sid, dx, dy, step) => {
      this.posted.push({ dx, dy, step });
      this.step += 1;
      const trialComplete = this.step >= 12;
      return {
        reward: -1,
        followed: false,
        accumulated_reward: -this.step,
        step: this.step,
        trial_index: this.trial,
        trial_complete: trialComplete,
        session_complete: false,
      };
    };
    api.postQuestionnaire = async (_sid, answers) => {
      this.questionnaires.push(answers);
      const done = this.trial === 1;
      this.trial += 1;
      this.step = 0;
      return { ok: true, session_complete: done };
    };
    return api;
  }
}

async function startPlaying(service: FixtureService): Promise<App> {
  document.body.innerHTML = `<div id="app"></div>`;
  const app = new App(service.client(), document.getElementById("app")!);
  await app.start();
  // answer the comprehension questions correctly and start
  COMPREHENSION.forEach((q, i) => {
    const input = document.querySelector<HTMLInputElement>(
      `input[name="comprehension_${i}"][value="${q.answer}"]`,
    )!;
    input.checked = true;
  });
  document.querySelector<HTMLButtonElement>(".start-game")!.click();
  await vi.waitFor(() => {
    if (!document.querySelector(".action-pad")) throw new Error("not playing yet");
  });
  return app;
}

function fillQuestionnaire(): void {
  for (const fieldset of document.querySelectorAll(".likert-item, .likert-scale")) void fieldset;
  for (const key of [
    "understand", "satisfying", "detailed", "complete", "actionable",
    "reliable", "trustworthy", "followed_advice", "confidence",
  ]) {
    document.querySelector<HTMLInputElement>(`input[name="${key}"][value="4"]`)!.checked = true;
  }
  for (let i = 0; i < 3; i++) {
    const first = document.querySelector<HTMLInputElement>(`input[name="attention_${i}"]`)!;
    first.checked = true;
  }
}

describe("game flow", () => {
  let service: FixtureService;

  beforeEach(() => {
    service = new FixtureService();
  });

  it("renders 25 action buttons in a 5x5 pad", async () => {
    await startPlaying(service);
    const buttons = document.querySelectorAll(".action-btn");
    expect(buttons.length).toBe(25);
    const stay = Array.from(buttons).find(
      (b) => b.getAttribute("data-dx") === "0" && b.getAttribute("data-dy") === "0",
    );
    expect(stay?.textContent).toBe("stay");
  });

  it("posts exactly one action per click and blocks doubles in flight", async () => {
    const app = await startPlaying(service);
    await Promise.all([app.onAction(1, 0), app.onAction(1, 0)]);
    expect(service.posted.length).toBe(1);
  });

  it("shows the reward from the payload, not a local computation", async () => {
    await startPlaying(service);
    const display = document.querySelector(".reward-display")!;
    expect(display.textContent).toContain(composed.accumulated_reward.toFixed(1));
  });

  it("twelve submissions lead to the questionnaire", async () => {
    const app = await startPlaying(service);
    for (let i = 0; i < 12; i++) {
      await app.onAction(0, 0);
    }
    expect(service.posted.length).toBe(12);
    expect(document.querySelector(".questionnaire")).not.toBeNull();
  });

  it("each Likert item exposes exactly 5 options", async () => {
    const app = await startPlaying(service);
    for (let i = 0; i < 12; i++) await app.onAction(0, 0);
    for (const item of document.querySelectorAll(".likert-item")) {
      expect(item.querySelectorAll('input[type="radio"]').length).toBe(5);
    }
    expect(document.querySelectorAll(".likert-item").length).toBe(9); // 7 scale + 2 usage
  });

  it("validates missing answers inline before posting", async () => {
    const app = await startPlaying(service);
    for (let i = 0; i < 12; i++) await app.onAction(0, 0);
    document.querySelector<HTMLButtonElement>(".submit-questionnaire")!.click();
    await vi.waitFor(() => {
      const errors = document.querySelectorAll(".field-error:not([hidden])");
      if (errors.length === 0) throw new Error("no errors shown");
    });
    expect(service.questionnaires.length).toBe(0);
  });

  it("completes the second trial and asks demographics at the end", async () => {
    const app = await startPlaying(service);
    for (let i = 0; i < 12; i++) await app.onAction(0, 0);
    fillQuestionnaire();
    document.querySelector<HTMLButtonElement>(".submit-questionnaire")!.click();
    await vi.waitFor(() => {
      if (!document.querySelector(".action-pad")) throw new Error("trial 2 not started");
    });
    expect(document.querySelector(".condition-display")!.textContent).toContain("saliency");
    for (let i = 0; i < 12; i++) await app.onAction(0, 0);
    // final questionnaire includes the demographics items
    const keys = Array.from(
      document.querySelectorAll<HTMLElement>(".demographic"),
    ).map((d) => d.dataset.key);
    expect(keys).toEqual(["age", "gender", "education", "country"]);
    fillQuestionnaire();
    document.querySelector<HTMLInputElement>(`input[name="age"]`)!.value = "33";
    document.querySelector<HTMLButtonElement>(".submit-questionnaire")!.click();
    await vi.waitFor(() => {
      if (!document.querySelector(".finished")) throw new Error("not finished");
    });
    expect(service.questionnaires.length).toBe(2);
    const last = service.questionnaires[1] as { age: string };
    expect(last.age).toBe("33");
  });

  it("requires correct comprehension answers before starting", async () => {
    document.body.innerHTML = `<div id="app"></div>`;
    const app = new App(service.client(), document.getElementById("app")!);
    await app.start();
    document.querySelector<HTMLButtonElement>(".start-game")!.click();
    await vi.waitFor(() => {
      const err = document.querySelector(".comprehension-error");
      if (!err || err.hasAttribute("hidden")) throw new Error("error not shown");
    });
    expect(document.querySelector(".action-pad")).toBeNull();
  });
});

describe("malformed payloads", () => {
  it("shows an error banner instead of crashing", async () => {
    const service = new FixtureService();
    const api = service.client();
    api.getStep = async () =>
      ({ ...composed, explanation: { kind: "composed" } }) as never;
    document.body.innerHTML = `<div id="app"></div>`;
    const app = new App(api, document.getElementById("app")!);
    await app.start();
    COMPREHENSION.forEach((q, i) => {
      document.querySelector<HTMLInputElement>(
        `input[name="comprehension_${i}"][value="${q.answer}"]`,
      )!.checked = true;
    });
    document.querySelector<HTMLButtonElement>(".start-game")!.click();
    await vi.waitFor(() => {
      const banner = document.querySelector(".error-banner");
      if (!banner || banner.hasAttribute("hidden")) throw new Error("banner not shown");
    });
    expect(document.body.textContent).toContain("could not render");
  });
});
