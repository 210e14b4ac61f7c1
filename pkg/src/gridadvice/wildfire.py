"""Wildfire environment: forest fuel/burning dynamics, aerial-vehicle actions,
reward, and the analytic fire-risk labels used to train the risk predictor.

Each step the forest updates in three phases: burning cells lose ``beta``
fuel (floored at 0, burning stops at 0), non-burning fueled cells ignite
independently with probability min(1, b_g / alpha) where b_g counts burning
cells within the ignition radius on the pre-update grid, and finally the
aerial vehicle's cell stops burning if it dropped water.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import count_disc_neighbors
from .grid import Cell, Displacement, GridSpec, clip_move

EPISODE_STEPS = 100
ACTIONS = ("extinguish", "stay", "north", "south", "east", "west")
MOVES = {
    "north": Displacement(0, -1),
    "south": Displacement(0, 1),
    "east": Displacement(1, 0),
    "west": Displacement(-1, 0),
}
MOVE_PENALTY = -1.0
LOW_RATIO_PENALTY = -2.5


class InvalidActionError(ValueError):
    """Unknown wildfire action token."""


@dataclass(frozen=True)
class FireParams:
    alpha: float = 20.0
    beta: float = 0.7
    ignition_radius: int = 2
    high_ratio_threshold: float = 0.3
    extinguish_gain: float = 10.0

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must be in (0, 1]")
        if self.ignition_radius < 1:
            raise ValueError("ignition_radius must be >= 1")
        if not 0 < self.high_ratio_threshold < 1:
            raise ValueError("high_ratio_threshold must be in (0, 1)")
        if self.extinguish_gain <= 0:
            raise ValueError("extinguish_gain must be > 0")


@dataclass(frozen=True)
class ForestState:
    grid: GridSpec
    fuel: np.ndarray  # (h, w) float64 in [0, 1]
    burning: np.ndarray  # (h, w) bool
    av: Cell
    step: int

    def is_terminal(self) -> bool:
        return self.step >= EPISODE_STEPS

    def to_json_dict(self) -> dict:
        return {
            "grid": {"width": self.grid.width, "height": self.grid.height},
            "fuel": self.fuel.tolist(),
            "burning": self.burning.astype(int).tolist(),
            "av": {"x": self.av.x, "y": self.av.y},
            "step": self.step,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ForestState":
        return cls(
            grid=GridSpec(doc["grid"]["width"], doc["grid"]["height"]),
            fuel=np.asarray(doc["fuel"], dtype=np.float64),
            burning=np.asarray(doc["burning"]).astype(bool),
            av=Cell(doc["av"]["x"], doc["av"]["y"]),
            step=doc["step"],
        )


def ignition_prob(b_g: int | np.ndarray, alpha: float) -> float | np.ndarray:
    """P(b_g > v * alpha) for v ~ Uniform(0, 1): min(1, b_g / alpha)."""
    return np.minimum(1.0, np.asarray(b_g, dtype=np.float64) / alpha)[()]


def fire_step(
    state: ForestState,
    extinguish_here: bool,
    params: FireParams,
    rng: np.random.Generator,
) -> ForestState:
    """One three-phase forest update; the AV position and step are untouched."""
    before = state.burning
    fuel = state.fuel.copy()
    fuel[before] = np.maximum(fuel[before] - params.beta, 0.0)
    burning = before & (fuel > 0)

    b_g = count_disc_neighbors(before, params.ignition_radius)
    v = rng.random(before.shape)
    ignited = (~before) & (fuel > 0) & (b_g > v * params.alpha)
    burning = burning | ignited

    if extinguish_here:
        burning = burning.copy()
        burning[state.av.y, state.av.x] = False

    return ForestState(grid=state.grid, fuel=fuel, burning=burning, av=state.av, step=state.step)


def neighborhood_fire_ratio(state: ForestState, g: Cell) -> float:
    """Burning fraction of the radius-1 Moore neighborhood including g,
    clipped at the borders."""
    y0, y1 = max(0, g.y - 1), min(state.grid.height, g.y + 2)
    x0, x1 = max(0, g.x - 1), min(state.grid.width, g.x + 2)
    window = state.burning[y0:y1, x0:x1]
    return float(window.sum()) / window.size


def wildfire_step(
    state: ForestState,
    action: str,
    params: FireParams,
    rng: np.random.Generator,
) -> tuple[ForestState, float]:
    """Apply an AV action, then let the fire advance one step."""
    if action not in ACTIONS:
        raise InvalidActionError(f"unknown action {action!r}; expected one of {ACTIONS}")

    av = state.av
    if action in MOVES:
        av = clip_move(av, MOVES[action], state.grid)
        reward = MOVE_PENALTY
    elif action == "stay":
        reward = 0.0
    else:  # extinguish
        ratio = neighborhood_fire_ratio(state, av)
        reward = params.extinguish_gain * ratio if ratio >= params.high_ratio_threshold else LOW_RATIO_PENALTY

    moved = ForestState(grid=state.grid, fuel=state.fuel, burning=state.burning, av=av, step=state.step)
    after = fire_step(moved, extinguish_here=(action == "extinguish"), params=params, rng=rng)
    return (
        ForestState(grid=after.grid, fuel=after.fuel, burning=after.burning, av=after.av,
                    step=state.step + 1),
        reward,
    )


def fire_risk_labels(state: ForestState, params: FireParams) -> np.ndarray:
    """Exact next-step fire probability per cell.

    1 where a burning cell keeps enough fuel to persist, the analytic
    ignition probability where a fueled cell is not burning, 0 otherwise.
    """
    b_g = count_disc_neighbors(state.burning, params.ignition_radius)
    mu = np.zeros(state.fuel.shape, dtype=np.float64)
    persists = state.burning & (state.fuel > params.beta)
    mu[persists] = 1.0
    candidate = (~state.burning) & (state.fuel > 0)
    mu[candidate] = np.minimum(1.0, b_g[candidate] / params.alpha)
    return mu


def new_fire_episode(
    grid: GridSpec,
    params: FireParams,
    rng: np.random.Generator,
    fuel_range: tuple[float, float] = (0.4, 1.0),
    ignition_neighbors: int = 5,
    av: Optional[Cell] = None,
) -> ForestState:
    """Random initial forest: uniform fuel, one burning seed cluster, AV at a
    random cell unless given.

    The seed cluster is the ignition cell plus up to ``ignition_neighbors``
    random cells of its Moore neighborhood, so fresh episodes already contain
    a blaze worth attacking.
    """
    fuel = rng.uniform(fuel_range[0], fuel_range[1], size=(grid.height, grid.width))
    burning = np.zeros((grid.height, grid.width), dtype=bool)
    cy = int(rng.integers(grid.height))
    cx = int(rng.integers(grid.width))
    burning[cy, cx] = True
    for _ in range(ignition_neighbors):
        ny = min(max(cy + int(rng.integers(-1, 2)), 0), grid.height - 1)
        nx = min(max(cx + int(rng.integers(-1, 2)), 0), grid.width - 1)
        burning[ny, nx] = True
    if av is None:
        av = Cell(int(rng.integers(grid.width)), int(rng.integers(grid.height)))
    return ForestState(grid=grid, fuel=fuel, burning=burning, av=av, step=0)
