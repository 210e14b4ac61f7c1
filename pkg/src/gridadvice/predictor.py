"""Per-cell prediction networks: feature construction, gradient-descent
training, and grid inference.

The taxi request predictor reads 20 features per cell (coordinates, the last
four 10-minute request counts, points of interest, clock fields, weather and
holiday columns); the fire-risk predictor reads 6 (coordinates, fuel, burning
flag, AV coordinates). Feature order is frozen; attribution reports features
by name.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import Cell, GridSpec
from .nn import (
    Adam,
    Mlp,
    TrainingDivergedError,
    fill_params,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
)
from .taxi import TaxiState
from .wildfire import FireParams, ForestState, fire_risk_labels

log = logging.getLogger(__name__)

TAXI_FEATURES = (
    "cell_x", "cell_y",
    "requests_m30", "requests_m20", "requests_m10", "requests_now",
    "poi_count",
    "hour", "minute", "weekday", "month",
    "temperature", "wind", "humidity", "air_pressure", "view",
    "snow", "precipitation", "clouds", "holiday",
)
FIRE_FEATURES = ("cell_x", "cell_y", "fuel", "burning", "av_x", "av_y")

TAXI_WIDTHS = [20, 128, 64, 32, 16, 1]
TAXI_ACTIVATIONS = ["relu", "relu", "relu", "relu", "identity"]
FIRE_WIDTHS = [6, 512, 512, 1]
FIRE_ACTIVATIONS = ["leaky_relu", "leaky_relu", "sigmoid"]


class MissingWeatherError(KeyError):
    """No calendar row for the requested timestamp."""


@dataclass(frozen=True)
class WeatherRow:
    temperature: float = 0.0
    wind: float = 0.0
    humidity: float = 0.0
    air_pressure: float = 0.0
    view: float = 0.0
    snow: float = 0.0
    precipitation: float = 0.0
    clouds: float = 0.0
    holiday: float = 0.0
    is_default: bool = False

    def values(self) -> list[float]:
        return [
            self.temperature, self.wind, self.humidity, self.air_pressure,
            self.view, self.snow, self.precipitation, self.clouds, self.holiday,
        ]


NEUTRAL_WEATHER = WeatherRow(is_default=True)

CALENDAR_COLUMNS = (
    "date", "hour", "temperature", "wind", "humidity", "air_pressure",
    "view", "snow", "precipitation", "clouds", "holiday",
)


class CalendarTable:
    """Hourly weather/holiday rows keyed by (date, hour), loaded from CSV."""

    def __init__(self, rows: dict[tuple[str, int], WeatherRow]):
        self._rows = rows

    @classmethod
    def from_csv(cls, path: str | Path) -> "CalendarTable":
        rows: dict[tuple[str, int], WeatherRow] = {}
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            missing = [c for c in CALENDAR_COLUMNS if c not in (reader.fieldnames or [])]
            if missing:
                raise ValueError(f"calendar CSV is missing columns: {', '.join(missing)}")
            for row in reader:
                key = (row["date"], int(row["hour"]))
                rows[key] = WeatherRow(*(float(row[c]) for c in CALENDAR_COLUMNS[2:]))
        return cls(rows)

    def lookup(self, clock: datetime) -> WeatherRow:
        key = (clock.date().isoformat(), clock.hour)
        try:
            return self._rows[key]
        except KeyError:
            raise MissingWeatherError(f"no calendar row for {key[0]} hour {key[1]}") from None


def weather_for(clock: datetime, calendar: Optional[CalendarTable]) -> WeatherRow:
    """Calendar lookup with a flagged neutral default when no table exists."""
    if calendar is None:
        log.debug("no calendar table; using neutral weather defaults for %s", clock)
        return NEUTRAL_WEATHER
    return calendar.lookup(clock)


@dataclass
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.names),):
            raise ValueError("feature values and names disagree in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")


def featurize_taxi(
    state: TaxiState, cell: Cell, poi: np.ndarray, weather: WeatherRow
) -> FeatureVector:
    """The 20 taxi features for one cell, in frozen order."""
    now, m10, m20, m30 = state.request_history
    values = [
        cell.x, cell.y,
        m30[cell.y, cell.x], m20[cell.y, cell.x], m10[cell.y, cell.x], now[cell.y, cell.x],
        poi[cell.y, cell.x],
        state.clock.hour, state.clock.minute, state.clock.weekday(), state.clock.month,
        *weather.values(),
    ]
    return FeatureVector(np.array(values, dtype=np.float64), TAXI_FEATURES)


def featurize_taxi_grid(state: TaxiState, poi: np.ndarray, weather: WeatherRow) -> np.ndarray:
    """(|G|, 20) feature matrix, row-major over cells; row g equals
    featurize_taxi(state, g)."""
    h, w = state.grid.height, state.grid.width
    n = h * w
    ys, xs = np.divmod(np.arange(n), w)
    now, m10, m20, m30 = (g.ravel() for g in state.request_history)
    cols = [
        xs, ys, m30, m20, m10, now, poi.ravel(),
        np.full(n, state.clock.hour), np.full(n, state.clock.minute),
        np.full(n, state.clock.weekday()), np.full(n, state.clock.month),
    ]
    cols.extend(np.full(n, v) for v in weather.values())
    return np.column_stack(cols).astype(np.float64)


def featurize_fire(state: ForestState, cell: Cell) -> FeatureVector:
    if not state.grid.contains(cell):
        raise ValueError(f"cell {cell} outside the {state.grid.width}x{state.grid.height} grid")
    values = [
        cell.x, cell.y,
        state.fuel[cell.y, cell.x], float(state.burning[cell.y, cell.x]),
        state.av.x, state.av.y,
    ]
    return FeatureVector(np.array(values, dtype=np.float64), FIRE_FEATURES)


def featurize_fire_grid(state: ForestState) -> np.ndarray:
    h, w = state.grid.height, state.grid.width
    n = h * w
    ys, xs = np.divmod(np.arange(n), w)
    return np.column_stack(
        [
            xs, ys,
            state.fuel.ravel(), state.burning.ravel().astype(np.float64),
            np.full(n, state.av.x), np.full(n, state.av.y),
        ]
    ).astype(np.float64)


@dataclass
class MlpConfig:
    widths: list[int]
    activations: list[str]
    learning_rate: float = 1e-3
    epochs: int = 15
    batch_size: int = 64
    max_steps: Optional[int] = None  # step-budget mode when set
    patience: Optional[int] = None  # early stop after this many steps without improvement
    seed: int = 0
    keep_best: bool = True
    standardize: bool = True


@dataclass
class TrainedMlp:
    """An Mlp plus the input standardization fitted with it."""

    net: Mlp
    feature_means: np.ndarray
    feature_stds: np.ndarray
    epoch_losses: list[float] = field(default_factory=list)
    steps_run: int = 0

    # batches at or above this row count take the float32 inference path
    F32_ROWS = 4096

    def raw(self, X: np.ndarray) -> np.ndarray:
        """Network output (post output activation) for raw feature rows."""
        z = (np.atleast_2d(X) - self.feature_means) / self.feature_stds
        if z.shape[0] >= self.F32_ROWS:
            return self.net.forward_f32(z)[:, 0]
        return self.net.forward(z)[:, 0]


def train_mlp(X: np.ndarray, y: np.ndarray, config: MlpConfig) -> TrainedMlp:
    """Adam + minibatch MSE training, deterministic given the seed.

    Epoch mode (``epochs``) or step-budget mode (``max_steps`` with optional
    early-stopping ``patience``); the best-loss snapshot is returned when
    ``keep_best`` is set. Raises TrainingDivergedError on a non-finite loss.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    if X.size == 0:
        raise ValueError("empty training set")
    if not np.isfinite(y).all():
        raise ValueError("targets must be finite")

    if config.standardize:
        means = X.mean(axis=0)
        stds = np.maximum(X.std(axis=0), 1e-9)
    else:
        means = np.zeros(X.shape[1])
        stds = np.ones(X.shape[1])
    Z = (X - means) / stds

    net = Mlp(config.widths, config.activations, config.seed)
    trained = TrainedMlp(net=net, feature_means=means, feature_stds=stds)
    rng = np.random.default_rng(config.seed)
    opt = Adam(net.params(), lr=config.learning_rate)

    best_loss = np.inf
    best_snapshot: list[np.ndarray] | None = None
    n = Z.shape[0]

    def snapshot_if_best(loss: float) -> None:
        nonlocal best_loss, best_snapshot
        if config.keep_best and loss < best_loss:
            best_loss = loss
            best_snapshot = [p.value.copy() for p in net.params()]

    def one_step(batch_idx: np.ndarray) -> float:
        opt.zero_grad()
        pred = net.forward(Z[batch_idx], train=True)
        loss, dpred = mse_loss(pred, y[batch_idx])
        net.backward(dpred)
        opt.step()
        return loss

    if config.max_steps is not None:
        since_best = 0
        step_best = np.inf
        for step in range(config.max_steps):
            if config.batch_size < n:
                idx = rng.integers(n, size=config.batch_size)
            else:
                idx = np.arange(n)
            loss = one_step(idx)
            if not np.isfinite(loss):
                raise TrainingDivergedError(step, loss)
            trained.epoch_losses.append(loss)
            trained.steps_run = step + 1
            snapshot_if_best(loss)
            if loss < step_best - 1e-12:
                step_best = loss
                since_best = 0
            else:
                since_best += 1
                if config.patience is not None and since_best >= config.patience:
                    break
    else:
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            batch_losses = []
            for lo in range(0, n, config.batch_size):
                batch_losses.append(one_step(order[lo : lo + config.batch_size]))
            epoch_loss = float(np.mean(batch_losses))
            if not np.isfinite(epoch_loss):
                raise TrainingDivergedError(epoch + 1, epoch_loss)
            trained.epoch_losses.append(epoch_loss)
            trained.steps_run += len(batch_losses)
            snapshot_if_best(epoch_loss)

    if best_snapshot is not None:
        for p, v in zip(net.params(), best_snapshot):
            p.value = v
    return trained


@dataclass
class CellPredictor:
    """A trained per-cell predictor bound to its domain featurizer."""

    trained: TrainedMlp
    domain: str  # "taxi" | "wildfire"
    feature_names: tuple[str, ...]
    clamp_nonneg: bool

    def predict_values(self, X: np.ndarray) -> np.ndarray:
        out = self.trained.raw(X)
        return np.maximum(out, 0.0) if self.clamp_nonneg else out

    @property
    def feature_means(self) -> np.ndarray:
        return self.trained.feature_means

    @property
    def feature_stds(self) -> np.ndarray:
        return self.trained.feature_stds


def predict_grid(
    predictor: CellPredictor,
    state: TaxiState | ForestState,
    poi: Optional[np.ndarray] = None,
    weather: Optional[WeatherRow] = None,
) -> np.ndarray:
    """Per-cell prediction over the whole grid.

    Taxi outputs are clamped at >= 0; wildfire outputs come through the
    network's sigmoid so risk stays in [0, 1].
    """
    if predictor.domain == "taxi":
        if not isinstance(state, TaxiState):
            raise TypeError("taxi predictor needs a TaxiState")
        if poi is None:
            poi = np.zeros((state.grid.height, state.grid.width))
        X = featurize_taxi_grid(state, poi, weather or NEUTRAL_WEATHER)
    else:
        if not isinstance(state, ForestState):
            raise TypeError("wildfire predictor needs a ForestState")
        X = featurize_fire_grid(state)
    values = predictor.predict_values(X)
    return values.reshape(state.grid.height, state.grid.width)


def mae(predictor: CellPredictor, X: np.ndarray, y: np.ndarray) -> float:
    """Mean absolute error of the deployed predictor on (features, target) rows."""
    if len(np.atleast_2d(X)) == 0:
        raise ValueError("empty dataset")
    return float(np.mean(np.abs(predictor.predict_values(X) - np.asarray(y, dtype=np.float64))))


def save_predictor(path: str | Path, predictor: CellPredictor) -> None:
    net = predictor.trained.net
    header = {
        "kind": "cell-predictor",
        "domain": predictor.domain,
        "widths": net.widths,
        "activations": net.activations,
        "seed": net.seed,
        "feature_names": list(predictor.feature_names),
        "clamp_nonneg": predictor.clamp_nonneg,
    }
    arrays = [p.value for p in net.params()]
    arrays.extend([predictor.feature_means, predictor.feature_stds])
    save_checkpoint(path, header, arrays)


def load_predictor(path: str | Path) -> CellPredictor:
    header, flat = load_checkpoint(path)
    if header.get("kind") != "cell-predictor":
        raise ValueError(f"{path} is not a cell-predictor checkpoint (kind={header.get('kind')!r})")
    net = Mlp(header["widths"], header["activations"], header["seed"])
    n_features = header["widths"][0]
    n_net = flat.size - 2 * n_features
    fill_params(net.params(), flat[:n_net])
    means = flat[n_net : n_net + n_features]
    stds = flat[n_net + n_features :]
    trained = TrainedMlp(net=net, feature_means=means.copy(), feature_stds=stds.copy())
    return CellPredictor(
        trained=trained,
        domain=header["domain"],
        feature_names=tuple(header["feature_names"]),
        clamp_nonneg=header["clamp_nonneg"],
    )


def build_taxi_dataset(
    demand,
    grid: GridSpec,
    episodes: int,
    rng: np.random.Generator,
    poi: Optional[np.ndarray] = None,
    calendar: Optional[CalendarTable] = None,
    steps_per_episode: int = 54,
) -> tuple[np.ndarray, np.ndarray]:
    """Random-policy rollouts; the target is each cell's request count at the
    next step."""
    from .taxi import TAXI_ACTIONS, new_episode, taxi_step

    if poi is None:
        poi = np.zeros((grid.height, grid.width))
    xs, ys = [], []
    for _ in range(episodes):
        state = new_episode(grid, demand, rng)
        for _ in range(steps_per_episode):
            feats = featurize_taxi_grid(state, poi, weather_for(state.clock, calendar))
            action = TAXI_ACTIONS[rng.integers(len(TAXI_ACTIONS))]
            state, _ = taxi_step(state, action, demand, rng)
            xs.append(feats)
            ys.append(state.request_history[0].ravel().astype(np.float64))
    return np.vstack(xs), np.concatenate(ys)


def build_fire_dataset(
    grid: GridSpec,
    params: FireParams,
    episodes: int,
    rng: np.random.Generator,
    steps_per_episode: int = 30,
) -> tuple[np.ndarray, np.ndarray]:
    """Random-policy rollouts labeled with the analytic next-step fire risk."""
    from .wildfire import ACTIONS, new_fire_episode, wildfire_step

    xs, ys = [], []
    for _ in range(episodes):
        state = new_fire_episode(grid, params, rng)
        for _ in range(steps_per_episode):
            xs.append(featurize_fire_grid(state))
            ys.append(fire_risk_labels(state, params).ravel())
            action = ACTIONS[rng.integers(len(ACTIONS))]
            state, _ = wildfire_step(state, action, params, rng)
    return np.vstack(xs), np.concatenate(ys)


def taxi_config(**overrides) -> MlpConfig:
    base = MlpConfig(widths=list(TAXI_WIDTHS), activations=list(TAXI_ACTIVATIONS),
                     learning_rate=1e-3, epochs=15)
    for k, v in overrides.items():
        setattr(base, k, v)
    return base


def fire_config(**overrides) -> MlpConfig:
    base = MlpConfig(widths=list(FIRE_WIDTHS), activations=list(FIRE_ACTIVATIONS),
                     learning_rate=1e-2, epochs=0, max_steps=1000, patience=100)
    for k, v in overrides.items():
        setattr(base, k, v)
    return base


def train_taxi_predictor(X: np.ndarray, y: np.ndarray, **overrides) -> CellPredictor:
    trained = train_mlp(X, y, taxi_config(**overrides))
    return CellPredictor(trained, "taxi", TAXI_FEATURES, clamp_nonneg=True)


def train_fire_predictor(X: np.ndarray, y: np.ndarray, **overrides) -> CellPredictor:
    trained = train_mlp(X, y, fire_config(**overrides))
    return CellPredictor(trained, "wildfire", FIRE_FEATURES, clamp_nonneg=False)
