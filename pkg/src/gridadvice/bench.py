"""Scaling benchmark: explanation size and generation time for both
explainers on both domains over a matrix of grid sizes.

Sizes are deterministic; only wall times vary across runs. Models may be
freshly initialized rather than trained (flagged in the report): generation
cost does not depend on training quality. The LIME sample budget is chosen
per grid size and recorded, since baseline timing scales with it.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dqn import QNetConfig, QNetwork, load_qnetwork
from .explain import explanation_size, generate_baseline, generate_composed
from .grid import GridSpec
from .predictor import (
    FIRE_ACTIVATIONS,
    FIRE_FEATURES,
    FIRE_WIDTHS,
    TAXI_ACTIVATIONS,
    TAXI_FEATURES,
    TAXI_WIDTHS,
    CellPredictor,
    Mlp,
    TrainedMlp,
    load_predictor,
)
from .taxi import desk_demand_model, new_episode
from .wildfire import FireParams, new_fire_episode

DOMAINS = ("taxi", "wildfire")
DEFAULT_SIZES = (10, 20, 40, 80)
DEFAULT_RUNS = 10
# per-grid-size LIME budgets; baseline cost is linear in the budget
DEFAULT_LIME_BUDGETS = {10: 1000, 20: 512, 40: 150, 80: 64}


class MissingModelError(FileNotFoundError):
    """A requested model checkpoint does not exist."""


@dataclass
class BenchRow:
    domain: str
    grid_size: int
    explainer: str  # "composed" | "baseline"
    size: int
    mean_time: float
    std_time: float
    runs: int
    lime_samples: int
    trained_models: bool


@dataclass
class BenchReport:
    rows: list[BenchRow]
    host: str
    seed: int
    timestamp: str
    parallelism: int = 1
    errors: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "host": self.host,
            "seed": self.seed,
            "timestamp": self.timestamp,
            "parallelism": self.parallelism,
            "errors": self.errors,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            ["domain", "grid_size", "explainer", "size", "mean_time", "std_time",
             "runs", "lime_samples", "trained_models"]
        )
        for r in self.rows:
            writer.writerow(
                [r.domain, r.grid_size, r.explainer, r.size,
                 repr(r.mean_time), repr(r.std_time), r.runs, r.lime_samples,
                 r.trained_models]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BenchReport":
        reader = csv.DictReader(io.StringIO(text))
        rows = [
            BenchRow(
                domain=r["domain"],
                grid_size=int(r["grid_size"]),
                explainer=r["explainer"],
                size=int(r["size"]),
                mean_time=float(r["mean_time"]),
                std_time=float(r["std_time"]),
                runs=int(r["runs"]),
                lime_samples=int(r["lime_samples"]),
                trained_models=r["trained_models"] == "True",
            )
            for r in reader
        ]
        return cls(rows=rows, host="", seed=0, timestamp="")

    def table(self) -> str:
        header = f"{'domain':<9} {'|G|':>7} {'explainer':<9} {'size':>7} {'mean s':>9} {'std s':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.domain:<9} {r.grid_size}x{r.grid_size:<4} {r.explainer:<9} "
                f"{r.size:>7} {r.mean_time:>9.3f} {r.std_time:>8.3f}"
            )
        return "\n".join(lines)


def _fresh_models(domain: str, size: int, seed: int) -> tuple[CellPredictor, QNetwork]:
    if domain == "taxi":
        net = Mlp(TAXI_WIDTHS, TAXI_ACTIVATIONS, seed=seed)
        pred = CellPredictor(
            TrainedMlp(net, np.zeros(20), np.ones(20)), "taxi", TAXI_FEATURES, True
        )
        qnet = QNetwork(QNetConfig(size, size, 2, 25, seed=seed))
    else:
        net = Mlp(FIRE_WIDTHS, FIRE_ACTIVATIONS, seed=seed)
        pred = CellPredictor(
            TrainedMlp(net, np.zeros(6), np.ones(6)), "wildfire", FIRE_FEATURES, False
        )
        qnet = QNetwork(QNetConfig(size, size, 3, 6, conv_filters=(4, 8, 16),
                                   conv_kernels=(3, 3, 3), seed=seed))
    return pred, qnet


def _load_models(model_dir: Path, domain: str, size: int) -> tuple[CellPredictor, QNetwork]:
    pred_path = model_dir / f"{domain}-predictor.ckpt"
    q_path = model_dir / f"{domain}-{size}-qnet.ckpt"
    for p in (pred_path, q_path):
        if not p.exists():
            raise MissingModelError(f"model checkpoint not found: {p}")
    return load_predictor(pred_path), load_qnetwork(q_path)


def _fresh_state(domain: str, size: int, rng: np.random.Generator):
    grid = GridSpec(size, size)
    if domain == "taxi":
        return new_episode(grid, desk_demand_model(grid), rng)
    return new_fire_episode(grid, FireParams(), rng)


def run_benchmark(
    domains: Sequence[str] = DOMAINS,
    sizes: Sequence[int] = DEFAULT_SIZES,
    runs: int = DEFAULT_RUNS,
    seed: int = 0,
    model_dir: Optional[Path] = None,
    lime_budgets: Optional[dict[int, int]] = None,
) -> BenchReport:
    """Time one explanation of each kind per run on fresh random states."""
    budgets = dict(DEFAULT_LIME_BUDGETS)
    if lime_budgets:
        budgets.update(lime_budgets)
    report = BenchReport(
        rows=[],
        host=f"{platform.platform()} / {platform.processor() or 'unknown-cpu'}",
        seed=seed,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )
    for domain in domains:
        for size in sizes:
            budget = budgets.get(size, 1000)
            try:
                if model_dir is not None:
                    pred, qnet = _load_models(Path(model_dir), domain, size)
                    trained = True
                else:
                    pred, qnet = _fresh_models(domain, size, seed)
                    trained = False
                rng = np.random.default_rng(seed + size)
                times = {"composed": [], "baseline": []}
                sizes_seen = {"composed": set(), "baseline": set()}
                for run in range(runs):
                    state = _fresh_state(domain, size, rng)
                    t0 = time.perf_counter()
                    composed = generate_composed(pred, qnet, state, seed=seed + run)
                    times["composed"].append(time.perf_counter() - t0)
                    sizes_seen["composed"].add(explanation_size(composed))
                    t0 = time.perf_counter()
                    baseline = generate_baseline(
                        pred, qnet, state, n_samples=budget, seed=seed + run
                    )
                    times["baseline"].append(time.perf_counter() - t0)
                    sizes_seen["baseline"].add(explanation_size(baseline))
                for explainer in ("baseline", "composed"):
                    assert len(sizes_seen[explainer]) == 1  # size is run-independent
                    report.rows.append(
                        BenchRow(
                            domain=domain,
                            grid_size=size,
                            explainer=explainer,
                            size=sizes_seen[explainer].pop(),
                            mean_time=float(np.mean(times[explainer])),
                            std_time=float(np.std(times[explainer])),
                            runs=runs,
                            lime_samples=budget if explainer == "baseline" else 0,
                            trained_models=trained,
                        )
                    )
            except MissingModelError:
                raise
            except Exception as exc:  # record the row failure, keep the matrix going
                report.errors.append(f"{domain}/{size}: {exc!r}")
    return report


def write_report(report: BenchReport, out: Path) -> None:
    out = Path(out)
    out.write_text(report.to_csv())
    out.with_suffix(".json").write_text(json.dumps(report.to_json_dict(), indent=2))
