"""Explanation assembly: domain index heatmaps, policy arrows with
normalized state importance, per-location top-feature lists, the saliency-map
baseline, the explanation-size metric, and SVG rendering.

The composed explanation bundles (1) top-ranked prediction features along the
policy path from the agent's cell, (2) a per-cell domain index grid, and
(3) the advised action plus normalized importance shade for every cell.
The baseline runs a LIME surrogate over the flattened prediction inputs
against the Q-value of the originally advised action and regroups the
coefficients into one saliency map per per-cell feature kind.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attrib import kernel_shap, lime_explain, top_k_features
from .dqn import DrlInput, build_sigma, substitute_cell
from .grid import Cell, GridSpec, clip_move
from .predictor import (
    CellPredictor,
    NEUTRAL_WEATHER,
    WeatherRow,
    featurize_fire,
    featurize_taxi,
    featurize_taxi_grid,
    predict_grid,
)
from .taxi import TAXI_ACTIONS, TaxiState
from .wildfire import ACTIONS as FIRE_ACTIONS
from .wildfire import MOVES as FIRE_MOVES
from .wildfire import ForestState

SCHEMA_VERSION = 1
DEFAULT_ETA = 0.75
DEFAULT_TOP_K = 6
DEFAULT_MAX_PATH = 6

TAXI_PER_CELL_KINDS = (
    "cell_x", "cell_y", "requests_m30", "requests_m20", "requests_m10",
    "requests_now", "poi_count",
)
TAXI_GLOBAL_KINDS = (
    "hour", "minute", "weekday", "month", "temperature", "wind", "humidity",
    "air_pressure", "view", "snow", "precipitation", "clouds", "holiday",
)
TAXI_BINARY_GLOBALS = ("snow", "clouds", "holiday")
FIRE_PER_CELL_KINDS = ("fuel", "burning", "av_location")


# -- domain index functions ---------------------------------------------------


def taxi_index(rho: np.ndarray, tau: np.ndarray, eta: float = DEFAULT_ETA) -> np.ndarray:
    """Demand-supply blend per cell: eta * rho/tau plus (1 - eta) times the
    cell's share of total predicted demand, 0 where no taxis are available."""
    rho = np.asarray(rho, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if rho.shape != tau.shape:
        raise ValueError("demand and supply grids must share a shape")
    if (rho < 0).any() or (tau < 0).any():
        raise ValueError("demand and supply must be nonnegative")
    total = rho.sum()
    share = rho * rho.size / total if total > 0 else np.zeros_like(rho)
    out = np.zeros_like(rho)
    served = tau > 0
    out[served] = eta * rho[served] / tau[served] + (1.0 - eta) * share[served]
    return out


def fire_index(theta: np.ndarray, mu: np.ndarray, burning: np.ndarray) -> np.ndarray:
    """-fuel*risk on burning cells, (1-fuel)*(1-risk) elsewhere; in [-1, 1]."""
    theta = np.asarray(theta, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if ((theta < 0) | (theta > 1)).any() or ((mu < 0) | (mu > 1)).any():
        raise ValueError("fuel and risk must lie in [0, 1]")
    burning = np.asarray(burning, dtype=bool)
    return np.where(burning, -theta * mu, (1.0 - theta) * (1.0 - mu))


# -- policy queries over the whole grid --------------------------------------


def importance_map(model, sigma: DrlInput) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell advised action and normalized importance.

    For each cell g the model is queried at the counterfactual input with the
    agent relocated to g; importance is the Q-value spread (max - min),
    min-max normalized over the grid (all-equal spreads normalize to 0).
    """
    grid = sigma.grid
    cells = list(grid.cells())
    q = np.asarray(model.q_values_cells(sigma, cells))
    actions = np.argmax(q, axis=1).reshape(grid.height, grid.width)
    spread = (q.max(axis=1) - q.min(axis=1)).reshape(grid.height, grid.width)
    lo, hi = spread.min(), spread.max()
    delta = (spread - lo) / (hi - lo) if hi > lo else np.zeros_like(spread)
    return actions.astype(np.int64), delta


def _apply_action(domain: str, cell: Cell, action: int, grid: GridSpec) -> Cell:
    if domain == "taxi":
        return clip_move(cell, TAXI_ACTIONS[action], grid)
    token = FIRE_ACTIONS[action]
    if token in FIRE_MOVES:
        return clip_move(cell, FIRE_MOVES[token], grid)
    return cell  # extinguish / stay


def policy_path(
    model,
    sigma: DrlInput,
    g_t: Cell,
    max_len: int = DEFAULT_MAX_PATH,
    domain: str = "taxi",
    action_grid: Optional[np.ndarray] = None,
) -> list[tuple[str, Cell]]:
    """Cells visited by following the advised action from g_t, labeled A, B,
    C, ...; stops at max_len cells, at a revisit, or when the policy stays."""
    if max_len < 1 or max_len > 26:
        raise ValueError("max_len must be in [1, 26]")
    cells = [g_t]
    current = g_t
    while len(cells) < max_len:
        if action_grid is not None:
            action = int(action_grid[current.y, current.x])
        else:
            action = int(np.argmax(model.q_values_cells(sigma, [current])[0]))
        nxt = _apply_action(domain, current, action, sigma.grid)
        if nxt == current or nxt in cells:
            break
        cells.append(nxt)
        current = nxt
    return list(zip(string.ascii_uppercase, cells))


def feature_list_budget(k: int, max_len: int) -> int:
    """Scalar budget charged for the path feature lists in the size metric:
    k * max_len padded up to the next multiple of ten."""
    return 10 * math.ceil(k * max_len / 10)


# -- explanation containers ---------------------------------------------------


@dataclass(eq=False)
class ComposedExplanation:
    domain: str
    grid: GridSpec
    feature_lists: list[tuple[str, Cell, list[tuple[str, float]]]]
    indices: np.ndarray
    actions: np.ndarray
    delta: np.ndarray
    advised_action: int
    feature_budget: int = feature_list_budget(DEFAULT_TOP_K, DEFAULT_MAX_PATH)

    def __post_init__(self) -> None:
        shape = (self.grid.height, self.grid.width)
        for name in ("indices", "actions", "delta"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != shape:
                raise ValueError(f"{name} must cover every cell of the grid")
            setattr(self, name, arr)
        if ((self.delta < 0) | (self.delta > 1)).any():
            raise ValueError("delta must lie in [0, 1]")
        labels = [label for label, _, _ in self.feature_lists]
        if labels != list(string.ascii_uppercase[: len(labels)]):
            raise ValueError("path labels must be consecutive letters from A")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ComposedExplanation):
            return NotImplemented
        return (
            self.domain == other.domain
            and self.grid == other.grid
            and self.advised_action == other.advised_action
            and self.feature_budget == other.feature_budget
            and self.feature_lists == other.feature_lists
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.delta, other.delta)
        )

    def to_json_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "composed",
            "domain": self.domain,
            "grid": {"width": self.grid.width, "height": self.grid.height},
            "advised_action": int(self.advised_action),
            "indices": self.indices.tolist(),
            "actions": self.actions.tolist(),
            "delta": self.delta.tolist(),
            "path": [
                {
                    "label": label,
                    "x": cell.x,
                    "y": cell.y,
                    "features": [{"name": n, "contribution": v} for n, v in feats],
                }
                for label, cell, feats in self.feature_lists
            ],
            "feature_budget": self.feature_budget,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ComposedExplanation":
        if doc.get("schema") != SCHEMA_VERSION or doc.get("kind") != "composed":
            raise ValueError("not a schema-1 composed explanation payload")
        return cls(
            domain=doc["domain"],
            grid=GridSpec(doc["grid"]["width"], doc["grid"]["height"]),
            feature_lists=[
                (
                    entry["label"],
                    Cell(entry["x"], entry["y"]),
                    [(f["name"], f["contribution"]) for f in entry["features"]],
                )
                for entry in doc["path"]
            ],
            indices=np.asarray(doc["indices"], dtype=np.float64),
            actions=np.asarray(doc["actions"], dtype=np.int64),
            delta=np.asarray(doc["delta"], dtype=np.float64),
            advised_action=doc["advised_action"],
            feature_budget=doc["feature_budget"],
        )


@dataclass(eq=False)
class SaliencyExplanation:
    domain: str
    grid: GridSpec
    maps: list[tuple[str, np.ndarray]]
    global_influences: list[tuple[str, float]]
    diagnostics: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SaliencyExplanation):
            return NotImplemented
        return (
            self.domain == other.domain
            and self.grid == other.grid
            and [k for k, _ in self.maps] == [k for k, _ in other.maps]
            and all(np.array_equal(a, b) for (_, a), (_, b) in zip(self.maps, other.maps))
            and self.global_influences == other.global_influences
        )

    def to_json_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "saliency",
            "domain": self.domain,
            "grid": {"width": self.grid.width, "height": self.grid.height},
            "maps": [{"feature": k, "values": v.tolist()} for k, v in self.maps],
            "global_influences": [
                {"name": n, "influence": v} for n, v in self.global_influences
            ],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SaliencyExplanation":
        if doc.get("schema") != SCHEMA_VERSION or doc.get("kind") != "saliency":
            raise ValueError("not a schema-1 saliency explanation payload")
        return cls(
            domain=doc["domain"],
            grid=GridSpec(doc["grid"]["width"], doc["grid"]["height"]),
            maps=[
                (m["feature"], np.asarray(m["values"], dtype=np.float64))
                for m in doc["maps"]
            ],
            global_influences=[
                (g["name"], g["influence"]) for g in doc["global_influences"]
            ],
            diagnostics=doc.get("diagnostics", {}),
        )


def explanation_size(e: ComposedExplanation | SaliencyExplanation) -> int:
    """Scalar count of an explanation: a composed one charges one index and
    one arrow glyph per cell plus the padded feature-list budget; the baseline
    charges every saliency value plus its global influences."""
    if isinstance(e, ComposedExplanation):
        return 2 * e.grid.size + e.feature_budget
    return len(e.maps) * e.grid.size + len(e.global_influences)


# -- composed generation ------------------------------------------------------


def _shap_feature_list(
    predictor: CellPredictor,
    x: np.ndarray,
    k: int,
    n_samples: int,
    seed: int,
    background: Optional[np.ndarray],
) -> list[tuple[str, float]]:
    bg = predictor.feature_means if background is None else background
    result = kernel_shap(
        predictor.predict_values, x, bg,
        n_samples=n_samples, seed=seed, feature_names=predictor.feature_names,
    )
    return top_k_features(result, min(k, len(predictor.feature_names)))


def generate_composed(
    predictor: CellPredictor,
    qmodel,
    state: TaxiState | ForestState,
    k: int = DEFAULT_TOP_K,
    max_len: int = DEFAULT_MAX_PATH,
    shap_samples: int = 256,
    seed: int = 0,
    eta: float = DEFAULT_ETA,
    poi: Optional[np.ndarray] = None,
    weather: Optional[WeatherRow] = None,
    background: Optional[np.ndarray] = None,
) -> ComposedExplanation:
    """Predict, build the DRL input, walk the policy path collecting top-k
    prediction features per visited cell, compute the domain index grid, and
    attach the advised action and normalized importance for every cell."""
    if isinstance(state, TaxiState):
        domain = "taxi"
        if poi is None:
            poi = np.zeros((state.grid.height, state.grid.width))
        weather = weather or NEUTRAL_WEATHER
        prediction = predict_grid(predictor, state, poi=poi, weather=weather)
        sigma = build_sigma(state, prediction)
        indices = taxi_index(prediction, state.taxis, eta)
    else:
        domain = "wildfire"
        prediction = predict_grid(predictor, state)
        sigma = build_sigma(state, prediction)
        indices = fire_index(state.fuel, prediction, state.burning)

    actions, delta = importance_map(qmodel, sigma)
    path = policy_path(qmodel, sigma, sigma.agent_cell, max_len, domain, action_grid=actions)

    feature_lists = []
    for i, (label, cell) in enumerate(path):
        if domain == "taxi":
            x = featurize_taxi(state, cell, poi, weather).values
        else:
            x = featurize_fire(state, cell).values
        feats = _shap_feature_list(predictor, x, k, shap_samples, seed + i, background)
        feature_lists.append((label, cell, feats))

    return ComposedExplanation(
        domain=domain,
        grid=state.grid,
        feature_lists=feature_lists,
        indices=indices,
        actions=actions,
        delta=delta,
        advised_action=int(actions[sigma.agent_cell.y, sigma.agent_cell.x]),
        feature_budget=feature_list_budget(k, max_len),
    )


# -- baseline generation ------------------------------------------------------


def _chunked(n: int, chunk: int):
    for lo in range(0, n, chunk):
        yield lo, min(lo + chunk, n)


def generate_baseline(
    predictor: CellPredictor,
    qmodel,
    state: TaxiState | ForestState,
    n_samples: int = 1000,
    seed: int = 0,
    poi: Optional[np.ndarray] = None,
    weather: Optional[WeatherRow] = None,
) -> SaliencyExplanation:
    """LIME over the flattened prediction inputs against the Q-value of the
    advice at the unperturbed input, regrouped into per-feature-kind maps."""
    if isinstance(state, TaxiState):
        return _taxi_baseline(predictor, qmodel, state, n_samples, seed, poi, weather)
    return _fire_baseline(predictor, qmodel, state, n_samples, seed)


def _q_of_advice(qmodel, channel_batch: np.ndarray, agent: Cell, a_star: int) -> np.ndarray:
    coords = np.tile(np.array([agent.x, agent.y], dtype=np.float64), (len(channel_batch), 1))
    return qmodel.forward(channel_batch, coords)[:, a_star]


def _taxi_baseline(predictor, qmodel, state, n_samples, seed, poi, weather):
    grid = state.grid
    g = grid.size
    if poi is None:
        poi = np.zeros((grid.height, grid.width))
    weather = weather or NEUTRAL_WEATHER
    feats0 = featurize_taxi_grid(state, poi, weather)  # (|G|, 20)
    n_kinds = len(TAXI_PER_CELL_KINDS)

    x0 = np.concatenate([feats0[:, : n_kinds].T.ravel(), feats0[0, n_kinds:]])
    rho0 = predictor.predict_values(feats0).reshape(grid.height, grid.width)
    sigma0 = build_sigma(state, rho0)
    a_star = int(np.argmax(qmodel.q_values_cells(sigma0, [sigma0.agent_cell])[0]))
    tau = state.taxis.astype(np.float64)

    chunk = max(1, 65_536 // g)

    def f(Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        out = np.empty(len(Z))
        for lo, hi in _chunked(len(Z), chunk):
            block = Z[lo:hi]
            m = len(block)
            X = np.tile(feats0, (m, 1, 1))  # (m, |G|, 20)
            X[:, :, :n_kinds] = block[:, : n_kinds * g].reshape(m, n_kinds, g).transpose(0, 2, 1)
            X[:, :, n_kinds:] = block[:, n_kinds * g :][:, None, :]
            rho = predictor.predict_values(X.reshape(m * g, -1)).reshape(
                m, grid.height, grid.width
            )
            channels = np.stack([rho, np.tile(tau, (m, 1, 1))], axis=1)
            out[lo:hi] = _q_of_advice(qmodel, channels, state.taxi, a_star)
        return out

    stds = predictor.feature_stds
    scales = np.concatenate(
        [np.repeat(np.maximum(stds[: n_kinds], 0.1), g), np.maximum(stds[n_kinds:], 0.1)]
    )
    binary = np.zeros(x0.size, dtype=bool)
    for name in TAXI_BINARY_GLOBALS:
        binary[n_kinds * g + TAXI_GLOBAL_KINDS.index(name)] = True

    result = lime_explain(
        f, x0, scales, n_samples=n_samples, seed=seed, binary_mask=binary
    )
    coef = result.contributions
    maps = [
        (kind, coef[j * g : (j + 1) * g].reshape(grid.height, grid.width).copy())
        for j, kind in enumerate(TAXI_PER_CELL_KINDS)
    ]
    globals_ = [
        (name, float(coef[n_kinds * g + j])) for j, name in enumerate(TAXI_GLOBAL_KINDS)
    ]
    return SaliencyExplanation(
        domain="taxi", grid=grid, maps=maps, global_influences=globals_,
        diagnostics={
            "n_samples": n_samples,
            "advised_action": a_star,
            "weighted_r2": result.diagnostics["weighted_r2"],
        },
    )


def _fire_baseline(predictor, qmodel, state, n_samples, seed):
    grid = state.grid
    g = grid.size
    h, w = grid.height, grid.width
    av_onehot = np.zeros(g)
    av_onehot[state.av.y * w + state.av.x] = 1.0
    x0 = np.concatenate([state.fuel.ravel(), state.burning.ravel().astype(np.float64), av_onehot])

    mu0 = predict_grid(predictor, state)
    sigma0 = build_sigma(state, mu0)
    a_star = int(np.argmax(qmodel.q_values_cells(sigma0, [sigma0.agent_cell])[0]))

    ys, xs = np.divmod(np.arange(g), w)
    chunk = max(1, 65_536 // g)

    def f(Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        out = np.empty(len(Z))
        for lo, hi in _chunked(len(Z), chunk):
            block = Z[lo:hi]
            m = len(block)
            fuel = block[:, :g]
            burning = block[:, g : 2 * g]
            av_idx = np.argmax(block[:, 2 * g :], axis=1)
            X = np.empty((m, g, 6))
            X[:, :, 0] = xs
            X[:, :, 1] = ys
            X[:, :, 2] = fuel
            X[:, :, 3] = burning
            X[:, :, 4] = (av_idx % w)[:, None]
            X[:, :, 5] = (av_idx // w)[:, None]
            mu = predictor.predict_values(X.reshape(m * g, 6)).reshape(m, h, w)
            channels = np.stack([fuel.reshape(m, h, w), burning.reshape(m, h, w), mu], axis=1)
            out[lo:hi] = _q_of_advice(qmodel, channels, state.av, a_star)
        return out

    fuel_std = max(float(predictor.feature_stds[2]), 0.05)
    scales = np.concatenate([np.full(g, fuel_std), np.ones(2 * g)])
    binary = np.concatenate([np.zeros(g, dtype=bool), np.ones(2 * g, dtype=bool)])

    result = lime_explain(
        f, x0, scales, n_samples=n_samples, seed=seed, binary_mask=binary
    )
    coef = result.contributions
    maps = [
        (kind, coef[j * g : (j + 1) * g].reshape(h, w).copy())
        for j, kind in enumerate(FIRE_PER_CELL_KINDS)
    ]
    return SaliencyExplanation(
        domain="wildfire", grid=grid, maps=maps, global_influences=[],
        diagnostics={
            "n_samples": n_samples,
            "advised_action": a_star,
            "weighted_r2": result.diagnostics["weighted_r2"],
        },
    )


# -- rendering ----------------------------------------------------------------


@dataclass
class PaletteConfig:
    """Color stops over the normalized index value t in [0, 1]."""

    stops: list[tuple[float, str]]

    def to_json_dict(self) -> dict:
        return {"stops": [{"t": t, "color": c} for t, c in self.stops]}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PaletteConfig":
        return cls(stops=[(s["t"], s["color"]) for s in doc["stops"]])

    def color(self, t: float) -> str:
        t = min(max(t, 0.0), 1.0)
        stops = sorted(self.stops)
        for (t0, c0), (t1, c1) in zip(stops, stops[1:]):
            if t <= t1:
                frac = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
                return _lerp_hex(c0, c1, frac)
        return stops[-1][1]


def _lerp_hex(a: str, b: str, t: float) -> str:
    av = [int(a[i : i + 2], 16) for i in (1, 3, 5)]
    bv = [int(b[i : i + 2], 16) for i in (1, 3, 5)]
    return "#" + "".join(f"{round(x + (y - x) * t):02x}" for x, y in zip(av, bv))


# darkest red marks index 0 for taxi; wildfire runs darkest red (-1) through
# white (0) to darkest green (+1)
TAXI_PALETTE = PaletteConfig(stops=[(0.0, "#8b0000"), (1.0, "#ffffff")])
FIRE_PALETTE = PaletteConfig(stops=[(0.0, "#8b0000"), (0.5, "#ffffff"), (1.0, "#006400")])


def _arrow_gray(delta: float) -> str:
    level = round(224 * (1.0 - delta))
    return f"#{level:02x}{level:02x}{level:02x}"


def _arrow_svg(cx: float, cy: float, dx: float, dy: float, color: str, scale: float) -> str:
    norm = math.hypot(dx, dy)
    ux, uy = dx / norm, dy / norm
    half = scale * (0.5 + 0.25 * (norm / 2.0))
    x0, y0 = cx - ux * half, cy - uy * half
    x1, y1 = cx + ux * half, cy + uy * half
    px, py = -uy, ux
    head = 0.3 * half
    return (
        f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x1:.1f}" y2="{y1:.1f}" '
        f'stroke="{color}" stroke-width="1.5"/>'
        f'<polygon points="{x1:.1f},{y1:.1f} {x1 - head * (ux + px):.1f},'
        f'{y1 - head * (uy + py):.1f} {x1 - head * (ux - px):.1f},{y1 - head * (uy - py):.1f}" '
        f'fill="{color}"/>'
    )


def _glyph_for(domain: str, action: int, cx: float, cy: float, color: str, cell_px: float) -> str:
    if domain == "taxi":
        dx, dy = TAXI_ACTIONS[action]
    else:
        token = FIRE_ACTIONS[action]
        if token == "extinguish":
            r = cell_px * 0.22
            return (
                f'<line x1="{cx - r:.1f}" y1="{cy - r:.1f}" x2="{cx + r:.1f}" '
                f'y2="{cy + r:.1f}" stroke="{color}" stroke-width="1.5"/>'
                f'<line x1="{cx - r:.1f}" y1="{cy + r:.1f}" x2="{cx + r:.1f}" '
                f'y2="{cy - r:.1f}" stroke="{color}" stroke-width="1.5"/>'
            )
        dx, dy = FIRE_MOVES.get(token, (0, 0))
    if dx == 0 and dy == 0:  # stay put
        return f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="2" fill="{color}"/>'
    return _arrow_svg(cx, cy, dx, dy, color, cell_px * 0.35)


def render_heatmap(
    e: ComposedExplanation,
    palette: Optional[PaletteConfig] = None,
    cell_px: int = 24,
) -> tuple[str, dict]:
    """SVG heatmap (index fill, action glyphs shaded by importance, path
    labels) plus the JSON payload mirroring the explanation."""
    if palette is None:
        palette = TAXI_PALETTE if e.domain == "taxi" else FIRE_PALETTE
    h, w = e.grid.height, e.grid.width
    if e.domain == "taxi":
        vmax = float(e.indices.max())
        norm = e.indices / vmax if vmax > 0 else np.zeros_like(e.indices)
    else:
        norm = (e.indices + 1.0) / 2.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * cell_px}" '
        f'height="{h * cell_px}" viewBox="0 0 {w * cell_px} {h * cell_px}">'
    ]
    for y in range(h):
        for x in range(w):
            fill = palette.color(float(norm[y, x]))
            parts.append(
                f'<rect x="{x * cell_px}" y="{y * cell_px}" width="{cell_px}" '
                f'height="{cell_px}" fill="{fill}" stroke="#cccccc" stroke-width="0.5"/>'
            )
    for y in range(h):
        for x in range(w):
            cx, cy = (x + 0.5) * cell_px, (y + 0.5) * cell_px
            color = _arrow_gray(float(e.delta[y, x]))
            parts.append(_glyph_for(e.domain, int(e.actions[y, x]), cx, cy, color, cell_px))
    for label, cell, _ in e.feature_lists:
        cx, cy = (cell.x + 0.5) * cell_px, (cell.y + 0.5) * cell_px
        parts.append(
            f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{cell_px * 0.28:.1f}" fill="#ffffff" '
            f'stroke="#333333" stroke-width="1"/>'
            f'<text x="{cx:.1f}" y="{cy + cell_px * 0.13:.1f}" text-anchor="middle" '
            f'font-size="{cell_px * 0.4:.0f}" font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    return "".join(parts), e.to_json_dict()
