import { ApiClient, ApiError } from "./api.js";
import { actionButtons, renderActionPad, setPadEnabled } from "./actions.js";
import { renderBoard, type BoardState } from "./board.js";
import { comprehensionPassed, renderInstructions } from "./instructions.js";
import { collectAnswers, renderQuestionnaire } from "./questionnaire.js";
import type { StepPayload } from "./types.js";

type Phase = "instructions" | "playing" | "questionnaire" | "done";

/**
 * Session state machine. One request is in flight at a time; the action pad
 * stays disabled until the server responds. The UI never computes rewards or
 * advice itself: everything shown comes from the service payloads.
 */
export class App {
  phase: Phase = "instructions";
  sessionId: string | null = null;
  payload: StepPayload | null = null;
  boardState: BoardState = { selectedLabel: null, selectedMap: 0 };
  trialIndex = 0;
  inFlight = false;

  constructor(
    private api: ApiClient,
    private root: HTMLElement,
  ) {}

  private el(selector: string): HTMLElement {
    const found = this.root.querySelector<HTMLElement>(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found;
  }

  async start(): Promise<void> {
    this.root.innerHTML =
      `<header><h1>Taxi advice game</h1>` +
      `<div class="status-pane">` +
      `<span class="trial-counter"></span> <span class="step-counter"></span> ` +
      `<span class="reward-display"></span> <span class="condition-display"></span>` +
      `</div></header>` +
      `<div class="error-banner" hidden></div>` +
      `<main><section class="stage"></section><section class="controls"></section></main>`;
    this.renderInstructionsPhase();
  }

  private renderInstructionsPhase(): void {
    this.phase = "instructions";
    renderInstructions(this.el(".stage"));
    this.el(".controls").innerHTML = "";
    this.el(".start-game").addEventListener("click", () => void this.onStart());
  }

  private async onStart(): Promise<void> {
    const stage = this.el(".stage");
    if (!comprehensionPassed(stage)) {
      stage.querySelector<HTMLElement>(".comprehension-error")!.hidden = false;
      return;
    }
    const session = await this.api.createSession();
    this.sessionId = session.id;
    await this.enterPlaying();
  }

  private async enterPlaying(): Promise<void> {
    this.phase = "playing";
    this.boardState = { selectedLabel: null, selectedMap: 0 };
    renderActionPad(this.el(".controls"));
    for (const btn of actionButtons(this.el(".controls"))) {
      btn.addEventListener("click", () => {
        void this.onAction(parseInt(btn.dataset.dx!, 10), parseInt(btn.dataset.dy!, 10));
      });
    }
    await this.refreshStep();
  }

  private async refreshStep(): Promise<void> {
    const payload = await this.api.getStep(this.sessionId!);
    this.payload = payload;
    this.trialIndex = payload.trial_index;
    this.renderPlaying();
  }

  private renderPlaying(): void {
    const payload = this.payload;
    if (!payload) return;
    try {
      renderBoard(this.el(".stage"), payload, this.boardState);
    } catch (err) {
      this.showError(`could not render the board: ${String(err)}`);
      return;
    }
    this.el(".trial-counter").textContent = `Trial ${payload.trial_index + 1}/2`;
    this.el(".step-counter").textContent = `Step ${payload.step + 1}/${payload.steps_per_trial}`;
    this.el(".reward-display").textContent = `Reward: ${payload.accumulated_reward.toFixed(1)}`;
    this.el(".condition-display").textContent = `Explanation: ${payload.condition}`;
    for (const label of this.el(".stage").querySelectorAll<HTMLElement>(".path-label")) {
      label.addEventListener("click", () => {
        this.boardState.selectedLabel = label.dataset.label ?? null;
        this.renderPlaying();
      });
    }
    const select = this.el(".stage").querySelector<HTMLSelectElement>(".map-select");
    select?.addEventListener("change", () => {
      this.boardState.selectedMap = parseInt(select.value, 10);
      this.renderPlaying();
    });
    setPadEnabled(this.el(".controls"), !this.inFlight);
  }

  async onAction(dx: number, dy: number): Promise<void> {
    if (this.inFlight || this.phase !== "playing" || !this.payload) return;
    this.inFlight = true;
    setPadEnabled(this.el(".controls"), false);
    try {
      const outcome = await this.api.postAction(this.sessionId!, dx, dy, this.payload.step);
      this.hideError();
      if (outcome.trial_complete) {
        this.enterQuestionnaire(outcome.session_complete);
      } else {
        await this.refreshStep();
      }
    } catch (err) {
      this.showError(err instanceof ApiError ? err.message : String(err));
    } finally {
      this.inFlight = false;
      if (this.phase === "playing") setPadEnabled(this.el(".controls"), true);
    }
  }

  private enterQuestionnaire(_sessionComplete: boolean): void {
    this.phase = "questionnaire";
    const lastTrial = this.trialIndex === 1;
    renderQuestionnaire(this.el(".stage"), lastTrial);
    this.el(".controls").innerHTML = "";
    this.el(".questionnaire").addEventListener("submit", (event) => {
      event.preventDefault();
      void this.onQuestionnaireSubmit();
    });
  }

  private async onQuestionnaireSubmit(): Promise<void> {
    const answers = collectAnswers(this.el(".stage"));
    if (!answers) return; // field-level errors are already shown
    try {
      const res = await this.api.postQuestionnaire(this.sessionId!, answers);
      this.hideError();
      if (res.session_complete) {
        this.phase = "done";
        this.el(".stage").innerHTML =
          `<div class="finished"><h2>All done — thank you!</h2>` +
          `<p>Both trials are complete and your responses were recorded.</p></div>`;
      } else {
        await this.enterPlaying();
      }
    } catch (err) {
      this.showError(err instanceof ApiError ? err.message : String(err));
    }
  }

  private showError(message: string): void {
    const banner = this.el(".error-banner");
    banner.textContent = message;
    banner.hidden = false;
  }

  private hideError(): void {
    this.el(".error-banner").hidden = true;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const app = new App(new ApiClient(""), document.getElementById("app")!);
  void app.start();
}
