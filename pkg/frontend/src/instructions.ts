/** Pre-game instruction pane with the four comprehension questions; the
 * trial starts only once all four are answered correctly. */

export const COMPREHENSION: { text: string; options: string[]; answer: string }[] = [
  {
    text: "Does the blue or the yellow square represent the location of the taxi?",
    options: ["blue", "yellow"],
    answer: "yellow",
  },
  {
    text: "Does the blue or the yellow square represent the location of the advice?",
    options: ["blue", "yellow"],
    answer: "blue",
  },
  {
    text: "When not limited by the city borders, can you move up to two or four cells in each direction?",
    options: ["two", "four"],
    answer: "two",
  },
  {
    text: "Is the goal of the game to minimize or maximize the reward?",
    options: ["minimize", "maximize"],
    answer: "maximize",
  },
];

export const GAME_DESCRIPTION = `
You are a taxi driver aiming to maximize your reward. The yellow square is
your current location, the blue square is the advised next location, and the
black square is your last location. Each step you may move up to two cells in
any direction or stay put, using the action buttons. Dropping off a passenger
earns +10; every step driven without a passenger costs -1. The panes around
the board explain how the advice was computed; panes can be collapsed and
expanded with their headers.`;

export function renderInstructions(container: HTMLElement): void {
  const questions = COMPREHENSION.map(
    (q, i) =>
      `<fieldset class="comprehension" data-index="${i}"><legend>${q.text}</legend>` +
      q.options
        .map((o) => `<label><input type="radio" name="comprehension_${i}" value="${o}"/>${o}</label>`)
        .join("") +
      `</fieldset>`,
  ).join("");
  container.innerHTML =
    `<div class="instructions"><h2>How the game works</h2>` +
    `<p>${GAME_DESCRIPTION.trim().replace(/\n/g, " ")}</p>` +
    `<h2>Quick check</h2>${questions}` +
    `<p class="comprehension-error" hidden>Please answer every question correctly before starting.</p>` +
    `<button class="start-game">Start</button></div>`;
}

export function comprehensionPassed(container: HTMLElement): boolean {
  return COMPREHENSION.every((q, i) => {
    const chosen = container.querySelector<HTMLInputElement>(
      `input[name="comprehension_${i}"]:checked`,
    );
    return chosen !== null && chosen.value === q.answer;
  });
}
