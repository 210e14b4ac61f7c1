import type { QuestionnaireAnswers } from "./types.js";

export const LIKERT_ITEMS: { key: string; text: string }[] = [
  { key: "understand", text: "The explanations help me understand how the agent's advice is computed." },
  { key: "satisfying", text: "The explanations are satisfying." },
  { key: "detailed", text: "The explanations are sufficiently detailed." },
  { key: "complete", text: "The explanations are sufficiently complete, that is, they provide me with all the needed information to make decisions." },
  { key: "actionable", text: "The explanations are actionable, that is, they help me know how to make decisions." },
  { key: "reliable", text: "The explanations let me know how reliable the agent is for decision support." },
  { key: "trustworthy", text: "The explanations let me know how trustworthy the agent is for decision support." },
];

export const USAGE_ITEMS: { key: string; text: string }[] = [
  { key: "followed_advice", text: "How much did you follow the given advices (marked with blue)?" },
  { key: "confidence", text: "In case you didn't follow the advices all the time: how confident are you that you chose better than the given advices?" },
];

export const ATTENTION_CHECKS: { text: string; options: string[] }[] = [
  { text: "Which square marks the taxi's current location?", options: ["yellow", "blue", "black"] },
  { text: "How many cells can you move in each direction at most?", options: ["one", "two", "four"] },
  { text: "Is the goal to minimize or maximize the reward?", options: ["minimize", "maximize"] },
];

export const DEMOGRAPHICS: { key: string; text: string }[] = [
  { key: "age", text: "How old are you?" },
  { key: "gender", text: "Which gender do you feel you belong to?" },
  { key: "education", text: "What is currently your highest level of education?" },
  { key: "country", text: "Which country do you live in?" },
];

function likertGroup(key: string, text: string): string {
  const options = [1, 2, 3, 4, 5]
    .map(
      (v) =>
        `<label class="likert-option"><input type="radio" name="${key}" value="${v}"/>${v}</label>`,
    )
    .join("");
  return (
    `<fieldset class="likert-item" data-key="${key}"><legend>${text}</legend>` +
    `<div class="likert-scale"><span>strongly disagree</span>${options}<span>strongly agree</span>` +
    `</div><p class="field-error" hidden>Please pick a rating.</p></fieldset>`
  );
}

export function renderQuestionnaire(container: HTMLElement, includeDemographics: boolean): void {
  const likert = LIKERT_ITEMS.map((i) => likertGroup(i.key, i.text)).join("");
  const usage = USAGE_ITEMS.map((i) => likertGroup(i.key, i.text)).join("");
  const checks = ATTENTION_CHECKS.map(
    (c, i) =>
      `<fieldset class="attention-check" data-index="${i}"><legend>${c.text}</legend>` +
      c.options
        .map(
          (o) =>
            `<label><input type="radio" name="attention_${i}" value="${o}"/>${o}</label>`,
        )
        .join("") +
      `<p class="field-error" hidden>Please answer this question.</p></fieldset>`,
  ).join("");
  const demographics = includeDemographics
    ? DEMOGRAPHICS.map(
        (d) =>
          `<label class="demographic" data-key="${d.key}">${d.text}` +
          `<input type="text" name="${d.key}"/></label>`,
      ).join("")
    : "";
  container.innerHTML =
    `<form class="questionnaire">` +
    `<h2>Explanation satisfaction</h2>${likert}` +
    `<h2>Advice usage</h2>${usage}` +
    `<label class="strategy">Please explain your strategy.<textarea name="strategy"></textarea></label>` +
    `<h2>Attention checks</h2>${checks}` +
    (demographics ? `<h2>About you</h2>${demographics}` : "") +
    `<button type="submit" class="submit-questionnaire">Submit</button>` +
    `</form>`;
}

/** Client-side validation; returns the answers or null after flagging the
 * missing fields inline. */
export function collectAnswers(container: HTMLElement): QuestionnaireAnswers | null {
  const form = container.querySelector<HTMLFormElement>(".questionnaire");
  if (!form) return null;
  let valid = true;
  const ratings: Record<string, number> = {};
  for (const { key } of [...LIKERT_ITEMS, ...USAGE_ITEMS]) {
    const chosen = form.querySelector<HTMLInputElement>(`input[name="${key}"]:checked`);
    const error = form.querySelector<HTMLElement>(`[data-key="${key}"] .field-error`);
    if (!chosen) {
      valid = false;
      if (error) error.hidden = false;
    } else {
      ratings[key] = parseInt(chosen.value, 10);
      if (error) error.hidden = true;
    }
  }
  const attention: string[] = [];
  ATTENTION_CHECKS.forEach((_, i) => {
    const chosen = form.querySelector<HTMLInputElement>(`input[name="attention_${i}"]:checked`);
    const error = form.querySelector<HTMLElement>(`[data-index="${i}"] .field-error`);
    if (!chosen) {
      valid = false;
      if (error) error.hidden = false;
    } else {
      attention.push(chosen.value);
      if (error) error.hidden = true;
    }
  });
  if (!valid) return null;
  const text = (name: string) =>
    form.querySelector<HTMLInputElement | HTMLTextAreaElement>(`[name="${name}"]`)?.value ?? "";
  return {
    understand: ratings.understand,
    satisfying: ratings.satisfying,
    detailed: ratings.detailed,
    complete: ratings.complete,
    actionable: ratings.actionable,
    reliable: ratings.reliable,
    trustworthy: ratings.trustworthy,
    followed_advice: ratings.followed_advice,
    confidence: ratings.confidence,
    strategy: text("strategy"),
    attention_checks: attention,
    age: text("age"),
    gender: text("gender"),
    education: text("education"),
    country: text("country"),
  };
}
