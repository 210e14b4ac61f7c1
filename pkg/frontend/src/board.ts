import type { ComposedExplanation, SaliencyExplanation, StepPayload } from "./types.js";

export interface BoardState {
  selectedLabel: string | null; // composed: which path label's features to show
  selectedMap: number; // saliency: which map is displayed
}

const CELL = 32;

function lerpHex(a: string, b: string, t: number): string {
  const av = [1, 3, 5].map((i) => parseInt(a.slice(i, i + 2), 16));
  const bv = [1, 3, 5].map((i) => parseInt(b.slice(i, i + 2), 16));
  const mix = av.map((x, i) => Math.round(x + (bv[i] - x) * Math.min(Math.max(t, 0), 1)));
  return "#" + mix.map((x) => x.toString(16).padStart(2, "0")).join("");
}

/** Taxi index fill: darkest red at 0, white at the grid maximum. */
function indexColor(value: number, max: number): string {
  return lerpHex("#8b0000", "#ffffff", max > 0 ? value / max : 0);
}

/** Saliency fill: blue for negative influence, red for positive. */
function saliencyColor(value: number, absMax: number): string {
  if (absMax <= 0) return "#ffffff";
  const t = value / absMax;
  return t >= 0 ? lerpHex("#ffffff", "#b2182b", t) : lerpHex("#ffffff", "#2166ac", -t);
}

function arrowGray(delta: number): string {
  const level = Math.round(224 * (1 - delta));
  const hex = level.toString(16).padStart(2, "0");
  return `#${hex}${hex}${hex}`;
}

function taxiDisplacement(action: number): { dx: number; dy: number } {
  return { dx: (action % 5) - 2, dy: Math.floor(action / 5) - 2 };
}

function arrowSvg(cx: number, cy: number, dx: number, dy: number, color: string): string {
  const norm = Math.hypot(dx, dy);
  if (norm === 0) {
    return `<circle cx="${cx}" cy="${cy}" r="2.5" fill="${color}"/>`;
  }
  const ux = dx / norm;
  const uy = dy / norm;
  const half = CELL * 0.35 * (0.5 + 0.25 * (norm / 2));
  const x1 = cx + ux * half;
  const y1 = cy + uy * half;
  const head = 0.3 * half;
  const px = -uy;
  const py = ux;
  return (
    `<line x1="${(cx - ux * half).toFixed(1)}" y1="${(cy - uy * half).toFixed(1)}" ` +
    `x2="${x1.toFixed(1)}" y2="${y1.toFixed(1)}" stroke="${color}" stroke-width="1.5"/>` +
    `<polygon fill="${color}" points="${x1.toFixed(1)},${y1.toFixed(1)} ` +
    `${(x1 - head * (ux + px)).toFixed(1)},${(y1 - head * (uy + py)).toFixed(1)} ` +
    `${(x1 - head * (ux - px)).toFixed(1)},${(y1 - head * (uy - py)).toFixed(1)}"/>`
  );
}

function marker(x: number, y: number, color: string, cls: string): string {
  return (
    `<rect class="${cls}" x="${x * CELL + 1.5}" y="${y * CELL + 1.5}" ` +
    `width="${CELL - 3}" height="${CELL - 3}" fill="none" stroke="${color}" stroke-width="3"/>`
  );
}

function composedCells(exp: ComposedExplanation): string {
  const { width, height } = exp.grid;
  const max = Math.max(...exp.indices.flat());
  const parts: string[] = [];
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      parts.push(
        `<rect x="${x * CELL}" y="${y * CELL}" width="${CELL}" height="${CELL}" ` +
          `fill="${indexColor(exp.indices[y][x], max)}" stroke="#cccccc" stroke-width="0.5"/>`,
      );
    }
  }
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const { dx, dy } = taxiDisplacement(exp.actions[y][x]);
      parts.push(
        arrowSvg((x + 0.5) * CELL, (y + 0.5) * CELL, dx, dy, arrowGray(exp.delta[y][x])),
      );
    }
  }
  return parts.join("");
}

function saliencyCells(exp: SaliencyExplanation, mapIndex: number): string {
  const { width, height } = exp.grid;
  const map = exp.maps[Math.min(mapIndex, exp.maps.length - 1)];
  const absMax = Math.max(...map.values.flat().map(Math.abs));
  const parts: string[] = [];
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      parts.push(
        `<rect x="${x * CELL}" y="${y * CELL}" width="${CELL}" height="${CELL}" ` +
          `fill="${saliencyColor(map.values[y][x], absMax)}" stroke="#cccccc" stroke-width="0.5"/>`,
      );
    }
  }
  return parts.join("");
}

function pathLabels(exp: ComposedExplanation): string {
  return exp.path
    .map((p) => {
      const cx = (p.x + 0.5) * CELL;
      const cy = (p.y + 0.5) * CELL;
      return (
        `<g class="path-label" data-label="${p.label}" style="cursor:pointer">` +
        `<circle cx="${cx}" cy="${cy}" r="${CELL * 0.28}" fill="#ffffff" stroke="#333333"/>` +
        `<text x="${cx}" y="${cy + CELL * 0.12}" text-anchor="middle" font-size="${CELL * 0.38}">` +
        `${p.label}</text></g>`
      );
    })
    .join("");
}

function featurePane(exp: ComposedExplanation, selected: string | null): string {
  if (!selected) {
    return `<div class="feature-pane" data-empty="true">Select a labelled cell (A–F) to see the top prediction features.</div>`;
  }
  const entry = exp.path.find((p) => p.label === selected);
  if (!entry) return `<div class="feature-pane" data-empty="true"></div>`;
  const rows = entry.features
    .map(
      (f) =>
        `<li class="feature-row"><span class="feature-name">${f.name}</span>` +
        `<span class="feature-value">${f.contribution.toFixed(4)}</span></li>`,
    )
    .join("");
  return (
    `<div class="feature-pane" data-label="${entry.label}">` +
    `<h3>Top features at ${entry.label}</h3><ol>${rows}</ol></div>`
  );
}

function mapSelector(exp: SaliencyExplanation, selected: number): string {
  const options = exp.maps
    .map(
      (m, i) =>
        `<option value="${i}"${i === selected ? " selected" : ""}>${m.feature}</option>`,
    )
    .join("");
  const globals = exp.global_influences
    .map(
      (g) =>
        `<li class="global-influence"><span>${g.name}</span><span>${g.influence.toFixed(5)}</span></li>`,
    )
    .join("");
  return (
    `<div class="map-selector"><label>Saliency map ` +
    `<select class="map-select">${options}</select></label>` +
    `<span class="map-count">${selected + 1}/${exp.maps.length}</span></div>` +
    (globals ? `<div class="global-pane"><h3>Location-independent features</h3><ul>${globals}</ul></div>` : "")
  );
}

/**
 * Renders the full board view for one step payload into `container`.
 * Pure in (payload, state): identical inputs produce identical DOM.
 */
export function renderBoard(container: HTMLElement, payload: StepPayload, state: BoardState): void {
  const { width, height } = payload.grid;
  const exp = payload.explanation;
  const cells =
    exp.kind === "composed" ? composedCells(exp) : saliencyCells(exp, state.selectedMap);
  const labels = exp.kind === "composed" ? pathLabels(exp) : "";
  const markers =
    (payload.last ? marker(payload.last.x, payload.last.y, "#000000", "marker-last") : "") +
    marker(payload.current.x, payload.current.y, "#ffd700", "marker-current") +
    marker(payload.advised.cell.x, payload.advised.cell.y, "#1e6fd9", "marker-advice");

  const side =
    exp.kind === "composed"
      ? featurePane(exp, state.selectedLabel)
      : mapSelector(exp, state.selectedMap);

  container.innerHTML =
    `<div class="board">` +
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width * CELL}" height="${height * CELL}" ` +
    `viewBox="0 0 ${width * CELL} ${height * CELL}">${cells}${markers}${labels}</svg>` +
    `</div><aside class="board-side">${side}</aside>`;
}
