/** The 5x5 action pad: one button per displacement, (0,0) is "stay". */

export function renderActionPad(container: HTMLElement): void {
  const rows: string[] = [];
  for (let dy = -2; dy <= 2; dy++) {
    const buttons: string[] = [];
    for (let dx = -2; dx <= 2; dx++) {
      const label = dx === 0 && dy === 0 ? "stay" : `${dx >= 0 ? "+" + dx : dx},${dy >= 0 ? "+" + dy : dy}`;
      buttons.push(
        `<button class="action-btn" data-dx="${dx}" data-dy="${dy}">${label}</button>`,
      );
    }
    rows.push(`<div class="action-row">${buttons.join("")}</div>`);
  }
  container.innerHTML = `<div class="action-pad">${rows.join("")}</div>`;
}

export function actionButtons(container: HTMLElement): HTMLButtonElement[] {
  return Array.from(container.querySelectorAll<HTMLButtonElement>(".action-btn"));
}

export function setPadEnabled(container: HTMLElement, enabled: boolean): void {
  for (const btn of actionButtons(container)) {
    btn.disabled = !enabled;
  }
}
