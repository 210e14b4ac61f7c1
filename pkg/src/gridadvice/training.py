"""Desk-scale training pipelines: per-domain predictor + DQN adviser pairs
sized to train on a laptop CPU in minutes, plus checkpoint layout helpers
shared by the CLI, the benchmark, and the game service.

Checkpoint layout under a model directory:
    <domain>-predictor.ckpt
    <domain>-<size>-qnet.ckpt
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .dqn import (
    DqnConfig,
    QNetwork,
    TaxiEnv,
    WildfireEnv,
    greedy_policy,
    random_policy,
    run_episode,
    save_qnetwork,
    train_dqn,
)
from .grid import GridSpec
from .predictor import (
    CellPredictor,
    build_fire_dataset,
    build_taxi_dataset,
    save_predictor,
    train_fire_predictor,
    train_taxi_predictor,
)
from .taxi import DemandModel, desk_demand_model
from .wildfire import FireParams


def train_taxi_pipeline(
    grid_size: int = 10,
    seed: int = 0,
    demand: Optional[DemandModel] = None,
    predictor_episodes: int = 3,
    predictor_epochs: int = 10,
    dqn: Optional[DqnConfig] = None,
    progress: Optional[Callable[[int, float], None]] = None,
) -> tuple[CellPredictor, QNetwork, TaxiEnv]:
    grid = GridSpec(grid_size, grid_size)
    demand = demand or desk_demand_model(grid)
    rng = np.random.default_rng(seed)
    X, y = build_taxi_dataset(demand, grid, episodes=predictor_episodes, rng=rng)
    predictor = train_taxi_predictor(X, y, epochs=predictor_epochs, seed=seed)
    env = TaxiEnv(grid, demand, predictor)
    dqn = dqn or taxi_dqn_config(seed)
    qnet = train_dqn(env, dqn, progress=progress)
    return predictor, qnet, env


def taxi_dqn_config(seed: int = 0, episodes: int = 250) -> DqnConfig:
    # desk-scale values: gamma below the full-scale 0.99 and short target lag
    # keep the bootstrap max-bias bounded at this training budget
    return DqnConfig(
        learning_rate=1e-3,
        gamma=0.9,
        epsilon_decay=40.0,
        target_update_interval=2,
        replay_capacity=15_000,
        batch_size=64,
        episodes=episodes,
        seed=seed,
        train_every=2,
        conv_filters=(8, 16, 32),
        conv_kernels=(5, 5, 3),
        trunk_width=256,
        head_width=128,
    )


def train_wildfire_pipeline(
    grid_size: int = 10,
    seed: int = 0,
    params: Optional[FireParams] = None,
    predictor_episodes: int = 4,
    dqn: Optional[DqnConfig] = None,
    progress: Optional[Callable[[int, float], None]] = None,
) -> tuple[CellPredictor, QNetwork, WildfireEnv]:
    grid = GridSpec(grid_size, grid_size)
    params = params or FireParams()
    rng = np.random.default_rng(seed)
    X, y = build_fire_dataset(grid, params, episodes=predictor_episodes, rng=rng)
    predictor = train_fire_predictor(X, y, seed=seed)
    env = WildfireEnv(grid, params, risk=predictor)
    dqn = dqn or wildfire_dqn_config(seed)
    qnet = train_dqn(env, dqn, progress=progress)
    return predictor, qnet, env


def wildfire_dqn_config(seed: int = 0, episodes: int = 120) -> DqnConfig:
    return DqnConfig(
        learning_rate=1e-3,
        gamma=0.9,
        epsilon_decay=30.0,
        target_update_interval=2,
        replay_capacity=15_000,
        batch_size=64,
        episodes=episodes,
        seed=seed,
        train_every=3,
        conv_filters=(4, 8, 16),
        conv_kernels=(3, 3, 3),
        trunk_width=256,
        head_width=128,
    )


def evaluate_policy(env, policy, episodes: int, seed: int) -> list[float]:
    """Total episode rewards under a policy, one fresh seeded episode each."""
    rng = np.random.default_rng(seed)
    return [run_episode(env, policy, rng)[0] for _ in range(episodes)]


def evaluate_fuel_preserved(env: WildfireEnv, policy, episodes: int, seed: int) -> list[float]:
    """Fraction of the initial fuel left at episode end, per episode."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(episodes):
        state = env.reset(rng)
        initial = state.fuel.sum()
        done = False
        while not done:
            action = policy(env.observe(state), rng)
            state, _, done = env.step(state, action, rng)
        out.append(float(state.fuel.sum() / initial))
    return out


def model_paths(model_dir: Path, domain: str, size: int) -> tuple[Path, Path]:
    model_dir = Path(model_dir)
    return (
        model_dir / f"{domain}-predictor.ckpt",
        model_dir / f"{domain}-{size}-qnet.ckpt",
    )


def save_models(model_dir: Path, domain: str, size: int,
                predictor: CellPredictor, qnet: QNetwork) -> None:
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    pred_path, q_path = model_paths(model_dir, domain, size)
    save_predictor(pred_path, predictor)
    save_qnetwork(q_path, qnet)


__all__ = [
    "train_taxi_pipeline",
    "train_wildfire_pipeline",
    "taxi_dqn_config",
    "wildfire_dqn_config",
    "evaluate_policy",
    "evaluate_fuel_preserved",
    "greedy_policy",
    "random_policy",
    "model_paths",
    "save_models",
]
