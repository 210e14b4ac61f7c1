"""Deep-Q adviser: DRL input assembly, dueling double deep Q-learning with
experience replay, and policy queries including the counterfactual
"agent relocated to cell g" evaluation used by the explanation layer.

The network is a conv stack over the per-cell channels whose flattened output
is concatenated with the (normalized) agent coordinates, then a fully
connected trunk feeding dueling value/advantage heads:
q = v + (a - mean a). Because the counterfactual only changes the agent
coordinates, ``q_values_cells`` runs the conv stack once and batches the
trunk over all queried cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import Cell, Displacement, GridSpec
from .nn import (
    Adam,
    Conv2d,
    Dense,
    ShapeError,
    TrainingDivergedError,
    activate,
    activate_backward,
    fill_params,
    load_checkpoint,
    save_checkpoint,
)
from .predictor import CellPredictor, WeatherRow, predict_grid, weather_for
from .taxi import TAXI_ACTIONS, TaxiState, new_episode, taxi_step
from .wildfire import ACTIONS as FIRE_ACTIONS
from .wildfire import FireParams, ForestState, fire_risk_labels, new_fire_episode, wildfire_step


@dataclass(frozen=True)
class DrlInput:
    """Q-network input: per-cell channels plus the agent's cell."""

    channels: np.ndarray  # (C, h, w) float64
    agent_cell: Cell
    grid: GridSpec

    def __post_init__(self) -> None:
        c = np.asarray(self.channels, dtype=np.float64)
        if c.ndim != 3 or c.shape[1:] != (self.grid.height, self.grid.width):
            raise ShapeError(
                f"channels shape {c.shape} does not match grid "
                f"{self.grid.width}x{self.grid.height}"
            )
        object.__setattr__(self, "channels", c)
        if not self.grid.contains(self.agent_cell):
            raise ShapeError(f"agent cell {self.agent_cell} outside the grid")


def build_sigma(state: TaxiState | ForestState, prediction: np.ndarray) -> DrlInput:
    """Taxi: [predicted requests, available taxis]; wildfire: [fuel, burning,
    predicted risk]. The agent cell rides alongside the channels."""
    prediction = np.asarray(prediction, dtype=np.float64)
    shape = (state.grid.height, state.grid.width)
    if prediction.shape != shape:
        raise ShapeError(f"prediction shape {prediction.shape}, grid wants {shape}")
    if isinstance(state, TaxiState):
        channels = np.stack([prediction, state.taxis.astype(np.float64)])
        return DrlInput(channels, state.taxi, state.grid)
    channels = np.stack([state.fuel, state.burning.astype(np.float64), prediction])
    return DrlInput(channels, state.av, state.grid)


def substitute_cell(sigma: DrlInput, g: Cell) -> DrlInput:
    """The counterfactual input with the agent relocated to g; channels are
    preserved untouched."""
    return DrlInput(sigma.channels, g, sigma.grid)


@dataclass(frozen=True)
class QNetConfig:
    width: int
    height: int
    in_channels: int
    action_count: int
    conv_filters: tuple[int, ...] = (8, 16, 32)
    conv_kernels: tuple[int, ...] = (5, 5, 3)
    trunk_width: int = 256
    head_width: int = 128
    seed: int = 0
    # float32 roughly halves training cost on memory-bound hosts; checkpoints
    # stay float64 on disk either way
    dtype: str = "float64"


class QNetwork:
    """Dueling conv Q-network; single-writer while training, pure inference."""

    def __init__(self, config: QNetConfig):
        if len(config.conv_filters) != len(config.conv_kernels):
            raise ValueError("conv_filters and conv_kernels must pair up")
        self.config = config
        self.dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(config.seed)
        self.convs: list[Conv2d] = []
        c_in = config.in_channels
        for c_out, k in zip(config.conv_filters, config.conv_kernels):
            self.convs.append(Conv2d(c_in, c_out, k, rng, dtype=self.dtype))
            c_in = c_out
        self.flat_width = c_in * config.height * config.width
        # the agent cell feeds the trunk as normalized coords plus a one-hot
        # grid: per-position weight columns carry the positional value signal
        # that two raw coordinates alone surface far too slowly
        self.cell_width = 2 + config.height * config.width
        self.trunk = Dense(self.flat_width + self.cell_width, config.trunk_width, rng,
                           dtype=self.dtype)
        self.v_hidden = Dense(config.trunk_width, config.head_width, rng, dtype=self.dtype)
        self.v_out = Dense(config.head_width, 1, rng, dtype=self.dtype)
        self.a_hidden = Dense(config.trunk_width, config.head_width, rng, dtype=self.dtype)
        self.a_out = Dense(config.head_width, config.action_count, rng, dtype=self.dtype)
        self._cache: dict = {}

    @property
    def action_count(self) -> int:
        return self.config.action_count

    def params(self):
        layers = [*self.convs, self.trunk, self.v_hidden, self.v_out, self.a_hidden, self.a_out]
        return [p for layer in layers for p in layer.params()]

    def copy_params_from(self, other: "QNetwork") -> None:
        for dst, src in zip(self.params(), other.params()):
            dst.value = src.value.copy()

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.config)
        twin.copy_params_from(self)
        return twin

    def _norm_cells(self, cells: np.ndarray) -> np.ndarray:
        scale = np.array([self.config.width - 1, self.config.height - 1], dtype=self.dtype)
        return np.asarray(cells, dtype=self.dtype) / scale

    def _cell_features(self, cells: np.ndarray) -> np.ndarray:
        """(N, 2) integer coords -> (N, 2 + |G|): normalized coords + one-hot."""
        cells = np.asarray(cells)
        n = len(cells)
        out = np.zeros((n, self.cell_width), dtype=self.dtype)
        out[:, :2] = self._norm_cells(cells)
        flat_idx = cells[:, 1].astype(np.int64) * self.config.width + cells[:, 0].astype(np.int64)
        out[np.arange(n), 2 + flat_idx] = 1.0
        return out

    def forward(self, channels: np.ndarray, cells: np.ndarray, train: bool = False) -> np.ndarray:
        """channels (N, C, h, w) and integer agent coords (N, 2) -> q (N, A)."""
        x = np.asarray(channels, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeError(f"expected (N, {self.config.in_channels}, h, w) channels, got {x.shape}")
        acts = []
        for conv in self.convs:
            x = activate("relu", conv.forward(x, train=train), inplace=True)
            acts.append(x)
        n = x.shape[0]
        flat = x.reshape(n, self.flat_width)
        trunk_in = np.concatenate([flat, self._cell_features(cells)], axis=1)
        t = activate("relu", self.trunk.forward(trunk_in, train=train), inplace=True)
        vh = activate("relu", self.v_hidden.forward(t, train=train), inplace=True)
        v = self.v_out.forward(vh, train=train)
        ah = activate("relu", self.a_hidden.forward(t, train=train), inplace=True)
        a = self.a_out.forward(ah, train=train)
        if train:
            self._cache = {"conv_acts": acts, "trunk_act": t, "v_act": vh, "a_act": ah,
                           "conv_shape": x.shape}
        return v + a - a.mean(axis=1, keepdims=True)

    def backward(self, dq: np.ndarray) -> None:
        cache = self._cache
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dq.mean(axis=1, keepdims=True)
        dah = activate_backward("relu", cache["a_act"], self.a_out.backward(da))
        dt = self.a_hidden.backward(dah)
        dvh = activate_backward("relu", cache["v_act"], self.v_out.backward(dv))
        dt = dt + self.v_hidden.backward(dvh)
        dtrunk_in = self.trunk.backward(activate_backward("relu", cache["trunk_act"], dt))
        dx = dtrunk_in[:, : self.flat_width].reshape(cache["conv_shape"])
        for i, (conv, act) in enumerate(zip(reversed(self.convs), reversed(cache["conv_acts"]))):
            is_first_layer = i == len(self.convs) - 1
            dx = conv.backward(activate_backward("relu", act, dx), need_dx=not is_first_layer)

    # -- inference ---------------------------------------------------------

    def q_values_cells(self, sigma: DrlInput, cells: Sequence[Cell]) -> np.ndarray:
        """Q(sigma[g], .) for many g at once: the conv stack runs once, the
        trunk is batched over the queried cells."""
        x = np.asarray(sigma.channels[None], dtype=self.dtype)
        for conv in self.convs:
            x = activate("relu", conv.forward(x), inplace=True)
        flat = x.reshape(self.flat_width)
        W = self.trunk.W.value
        base = flat @ W[: self.flat_width] + self.trunk.b.value
        coords = np.array([[c.x, c.y] for c in cells], dtype=np.int64)
        xy = self._norm_cells(coords)
        # the one-hot block reduces to a row gather
        pos_rows = W[self.flat_width + 2 :][coords[:, 1] * self.config.width + coords[:, 0]]
        t = activate("relu", base + xy @ W[self.flat_width : self.flat_width + 2] + pos_rows,
                     inplace=True)
        vh = activate("relu", t @ self.v_hidden.W.value + self.v_hidden.b.value, inplace=True)
        v = vh @ self.v_out.W.value + self.v_out.b.value
        ah = activate("relu", t @ self.a_hidden.W.value + self.a_hidden.b.value, inplace=True)
        a = ah @ self.a_out.W.value + self.a_out.b.value
        return v + a - a.mean(axis=1, keepdims=True)


def q_values(model: QNetwork, sigma: DrlInput) -> np.ndarray:
    """Per-action Q-vector for one input; deterministic."""
    return model.q_values_cells(sigma, [sigma.agent_cell])[0]


def advise(model: QNetwork, sigma: DrlInput) -> int:
    """argmax over q_values; ties break toward the lowest action index."""
    return int(np.argmax(q_values(model, sigma)))


@dataclass
class DqnConfig:
    learning_rate: float = 1e-3
    gamma: float = 0.99
    epsilon_decay: float = 675.0
    target_update_interval: int = 11
    replay_capacity: int = 15_000
    batch_size: int = 64
    episodes: int = 300
    seed: int = 0
    train_every: int = 1
    epsilon_min: float = 0.05
    epsilon_span: float = 0.95
    conv_filters: tuple[int, ...] = (8, 16, 32)
    conv_kernels: tuple[int, ...] = (5, 5, 3)
    trunk_width: int = 256
    head_width: int = 128
    net_dtype: str = "float32"

    def __post_init__(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay_capacity must be >= batch_size")

    def epsilon(self, episode: int) -> float:
        return self.epsilon_min + self.epsilon_span * float(np.exp(-episode / self.epsilon_decay))


class ReplayBuffer:
    """Fixed-capacity uniform replay; evicts oldest-first."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._storage: dict[str, np.ndarray] = {}
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, channels, cell, action, reward, next_channels, next_cell, done) -> None:
        if not self._storage:
            c = np.asarray(channels, dtype=np.float64)
            self._storage = {
                "channels": np.zeros((self.capacity, *c.shape)),
                "cells": np.zeros((self.capacity, 2)),
                "actions": np.zeros(self.capacity, dtype=np.int64),
                "rewards": np.zeros(self.capacity),
                "next_channels": np.zeros((self.capacity, *c.shape)),
                "next_cells": np.zeros((self.capacity, 2)),
                "dones": np.zeros(self.capacity, dtype=bool),
            }
        i = self._next
        self._storage["channels"][i] = channels
        self._storage["cells"][i] = (cell.x, cell.y)
        self._storage["actions"][i] = action
        self._storage["rewards"][i] = reward
        self._storage["next_channels"][i] = next_channels
        self._storage["next_cells"][i] = (next_cell.x, next_cell.y)
        self._storage["dones"][i] = done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = rng.integers(self._size, size=batch_size)
        return {k: v[idx] for k, v in self._storage.items()}


def double_dqn_targets(
    online: "QNetwork",
    target: "QNetwork",
    next_channels: np.ndarray,
    next_cells: np.ndarray,
    rewards: np.ndarray,
    dones: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Bellman targets with the online net choosing and the target net
    evaluating the next action."""
    a_star = np.argmax(online.forward(next_channels, next_cells), axis=1)
    q_next = target.forward(next_channels, next_cells)
    bootstrap = q_next[np.arange(len(a_star)), a_star]
    return rewards + gamma * bootstrap * (~np.asarray(dones, dtype=bool))


def dqn_learn_step(
    online: QNetwork,
    target: QNetwork,
    opt: Adam,
    batch: dict[str, np.ndarray],
    gamma: float,
) -> float:
    y = double_dqn_targets(
        online, target, batch["next_channels"], batch["next_cells"],
        batch["rewards"], batch["dones"], gamma,
    )
    # no zero_grad needed: every layer's backward assigns its gradient
    q = online.forward(batch["channels"], batch["cells"], train=True)
    rows = np.arange(len(y))
    taken = q[rows, batch["actions"]]
    diff = taken - y
    loss = float(np.mean(diff**2))
    dq = np.zeros_like(q)
    dq[rows, batch["actions"]] = 2.0 * diff / len(y)
    online.backward(dq)
    opt.step()
    return loss


def train_dqn(env, config: DqnConfig, progress: Optional[Callable[[int, float], None]] = None) -> QNetwork:
    """Epsilon-greedy episodes with uniform replay, double-DQN targets, and
    hard target syncs every ``target_update_interval`` episodes."""
    rng = np.random.default_rng(config.seed)
    net_config = QNetConfig(
        width=env.grid.width,
        height=env.grid.height,
        in_channels=env.channel_count,
        action_count=env.action_count,
        conv_filters=tuple(config.conv_filters),
        conv_kernels=tuple(config.conv_kernels),
        trunk_width=config.trunk_width,
        head_width=config.head_width,
        seed=config.seed,
        dtype=config.net_dtype,
    )
    online = QNetwork(net_config)
    target = online.clone()
    opt = Adam(online.params(), lr=config.learning_rate)
    buffer = ReplayBuffer(config.replay_capacity)
    step_count = 0

    for episode in range(config.episodes):
        eps = config.epsilon(episode)
        state = env.reset(rng)
        sigma = env.observe(state)
        total = 0.0
        done = False
        while not done:
            if rng.random() < eps:
                action = int(rng.integers(env.action_count))
            else:
                action = advise(online, sigma)
            state, reward, done = env.step(state, action, rng)
            next_sigma = env.observe(state)
            buffer.push(
                sigma.channels, sigma.agent_cell, action, reward,
                next_sigma.channels, next_sigma.agent_cell, done,
            )
            sigma = next_sigma
            total += reward
            step_count += 1
            if len(buffer) >= config.batch_size and step_count % config.train_every == 0:
                loss = dqn_learn_step(online, target, opt, buffer.sample(config.batch_size, rng),
                                      config.gamma)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(episode, loss)
        if (episode + 1) % config.target_update_interval == 0:
            target.copy_params_from(online)
        if progress is not None:
            progress(episode, total)
    return online


# -- environment adapters ---------------------------------------------------


class TaxiEnv:
    """Taxi simulator + request predictor glued into the DQN training loop.

    The adviser's decision process covers the unoccupied (repositioning)
    states only: the DRL input cannot express occupancy, and the simulator
    ignores actions while a passenger is aboard anyway. A step therefore
    advances through any trip it triggers, folding the trip's rewards
    (including the drop-off bonus) into the decision transition.
    """

    channel_count = 2

    def __init__(self, grid: GridSpec, demand, predictor: CellPredictor,
                 poi: Optional[np.ndarray] = None, calendar=None, fleet_size: int = 50):
        self.grid = grid
        self.demand = demand
        self.predictor = predictor
        self.poi = poi if poi is not None else np.zeros((grid.height, grid.width))
        self.calendar = calendar
        self.fleet_size = fleet_size
        self.action_count = len(TAXI_ACTIONS)

    def reset(self, rng: np.random.Generator) -> TaxiState:
        state = new_episode(self.grid, self.demand, rng, fleet_size=self.fleet_size)
        # new_episode never starts occupied, so this is already a decision state
        return state

    def predict(self, state: TaxiState) -> np.ndarray:
        weather = weather_for(state.clock, self.calendar)
        return predict_grid(self.predictor, state, poi=self.poi, weather=weather)

    def observe(self, state: TaxiState) -> DrlInput:
        return build_sigma(state, self.predict(state))

    def step(self, state: TaxiState, action_idx: int, rng: np.random.Generator):
        state, reward = taxi_step(state, TAXI_ACTIONS[action_idx], self.demand, rng)
        while state.occupied and not state.is_terminal():
            state, r = taxi_step(state, Displacement(0, 0), self.demand, rng)
            reward += r
        return state, reward, state.is_terminal()


class WildfireEnv:
    """Wildfire simulator + fire-risk predictor for the DQN training loop.

    ``risk`` may be a trained CellPredictor or any callable mapping a
    ForestState to a per-cell risk grid (e.g. the analytic labels).
    """

    channel_count = 3

    def __init__(self, grid: GridSpec, params: FireParams,
                 risk: CellPredictor | Callable[[ForestState], np.ndarray] | None = None):
        self.grid = grid
        self.params = params
        if risk is None:
            risk = lambda s: fire_risk_labels(s, params)  # noqa: E731
        self.risk = risk
        self.action_count = len(FIRE_ACTIONS)

    def reset(self, rng: np.random.Generator) -> ForestState:
        return new_fire_episode(self.grid, self.params, rng)

    def predict(self, state: ForestState) -> np.ndarray:
        if isinstance(self.risk, CellPredictor):
            return predict_grid(self.risk, state)
        return self.risk(state)

    def observe(self, state: ForestState) -> DrlInput:
        return build_sigma(state, self.predict(state))

    def step(self, state: ForestState, action_idx: int, rng: np.random.Generator):
        state, reward = wildfire_step(state, FIRE_ACTIONS[action_idx], self.params, rng)
        return state, reward, state.is_terminal()


def run_episode(env, policy: Callable[[DrlInput, np.random.Generator], int],
                rng: np.random.Generator):
    """Roll one episode; returns (total reward, final state)."""
    state = env.reset(rng)
    total = 0.0
    done = False
    while not done:
        action = policy(env.observe(state), rng)
        state, reward, done = env.step(state, action, rng)
        total += reward
    return total, state


def greedy_policy(model: QNetwork) -> Callable[[DrlInput, np.random.Generator], int]:
    return lambda sigma, rng: advise(model, sigma)


def random_policy(action_count: int) -> Callable[[DrlInput, np.random.Generator], int]:
    return lambda sigma, rng: int(rng.integers(action_count))


# -- checkpoints -------------------------------------------------------------


def save_qnetwork(path: str | Path, model: QNetwork) -> None:
    cfg = model.config
    header = {
        "kind": "q-network",
        "width": cfg.width,
        "height": cfg.height,
        "in_channels": cfg.in_channels,
        "action_count": cfg.action_count,
        "conv_filters": list(cfg.conv_filters),
        "conv_kernels": list(cfg.conv_kernels),
        "trunk_width": cfg.trunk_width,
        "head_width": cfg.head_width,
        "seed": cfg.seed,
    }
    save_checkpoint(path, header, [p.value for p in model.params()])


def load_qnetwork(path: str | Path) -> QNetwork:
    header, flat = load_checkpoint(path)
    if header.get("kind") != "q-network":
        raise ValueError(f"{path} is not a q-network checkpoint (kind={header.get('kind')!r})")
    config = QNetConfig(
        width=header["width"],
        height=header["height"],
        in_channels=header["in_channels"],
        action_count=header["action_count"],
        conv_filters=tuple(header["conv_filters"]),
        conv_kernels=tuple(header["conv_kernels"]),
        trunk_width=header["trunk_width"],
        head_width=header["head_width"],
        seed=header["seed"],
    )
    model = QNetwork(config)
    fill_params(model.params(), flat)
    return model
