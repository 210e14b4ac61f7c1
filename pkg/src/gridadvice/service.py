"""HTTP game service for human advice-following trials.

A session plays two 12-step taxi trials, one per explanation condition
("composed" vs "saliency"), counterbalanced across sessions. The service
serves per-step advice and explanation payloads, accepts actions, measures
decision time server-side (payload served -> action received), collects the
questionnaire after each trial, and exports both CSV logs.

Persistence is an append-only JSONL event log; state is rebuilt on startup
by replaying it through the simulator (the per-trial rng streams are seeded
deterministically, so rewards replay exactly).
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from io import StringIO
from pathlib import Path
from typing import Literal, Optional

import csv

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .dqn import QNetConfig, QNetwork, advise, build_sigma, load_qnetwork
from .explain import generate_baseline, generate_composed
from .grid import Cell, Displacement, GridSpec, clip_move
from .predictor import (
    TAXI_ACTIVATIONS,
    TAXI_FEATURES,
    TAXI_WIDTHS,
    CellPredictor,
    Mlp,
    TrainedMlp,
    load_predictor,
    predict_grid,
)
from .taxi import MAX_MOVE, TAXI_ACTIONS, TaxiState, desk_demand_model, new_episode, taxi_step

CONDITIONS = ("composed", "saliency")
TRIALS = 2
TRIAL_STEPS = 12

LIKERT_ITEMS = (
    "understand", "satisfying", "detailed", "complete", "actionable",
    "reliable", "trustworthy",
)
USAGE_ITEMS = ("followed_advice", "confidence")

GAME_LOG_COLUMNS = (
    "session_id", "condition", "trial_index", "step", "advised_dx", "advised_dy",
    "chosen_dx", "chosen_dy", "followed", "reward", "decision_time_ms",
)
DEMOGRAPHIC_ITEMS = ("age", "gender", "education", "country")
QUESTIONNAIRE_COLUMNS = (
    "session_id", "condition", *LIKERT_ITEMS, *USAGE_ITEMS, "strategy",
    "attention_1", "attention_2", "attention_3", *DEMOGRAPHIC_ITEMS,
)


@dataclass
class ServiceConfig:
    data_dir: Path
    seed: int = 0
    grid_size: int = 10
    fleet_size: int = 50
    lime_samples: int = 300
    shap_samples: int = 128
    model_dir: Optional[Path] = None
    static_dir: Optional[Path] = None
    wildfire_demo: bool = False  # the study game is taxi-only

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        return cls(
            data_dir=Path(os.environ.get("GRIDADVICE_DATA_DIR", "./gridadvice-data")),
            seed=int(os.environ.get("GRIDADVICE_SEED", "0")),
            grid_size=int(os.environ.get("GRIDADVICE_GRID_SIZE", "10")),
            fleet_size=int(os.environ.get("GRIDADVICE_FLEET_SIZE", "50")),
            lime_samples=int(os.environ.get("GRIDADVICE_LIME_SAMPLES", "300")),
            shap_samples=int(os.environ.get("GRIDADVICE_SHAP_SAMPLES", "128")),
            model_dir=Path(p) if (p := os.environ.get("GRIDADVICE_MODEL_DIR")) else None,
            static_dir=Path(p) if (p := os.environ.get("GRIDADVICE_STATIC_DIR")) else None,
            wildfire_demo=os.environ.get("GRIDADVICE_WILDFIRE_DEMO", "") == "1",
        )


@dataclass
class StepRecord:
    trial_index: int
    step: int
    condition: str
    advised: Displacement
    chosen: Displacement
    reward: float
    decision_time_ms: float

    @property
    def followed(self) -> bool:
        return self.chosen == self.advised


@dataclass
class Session:
    id: str
    seed: int
    order: tuple[str, str]
    trial_index: int = 0
    step: int = 0
    env_state: Optional[TaxiState] = None
    last_cell: Optional[Cell] = None
    rng: Optional[np.random.Generator] = None
    accumulated_reward: float = 0.0
    records: list[StepRecord] = field(default_factory=list)
    questionnaires: dict[int, dict] = field(default_factory=dict)
    awaiting_questionnaire: bool = False
    complete: bool = False
    payload: Optional[dict] = None
    advised: Optional[Displacement] = None
    served_monotonic: Optional[float] = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def condition(self) -> str:
        return self.order[min(self.trial_index, TRIALS - 1)]


class CreateSessionRequest(BaseModel):
    order_hint: Optional[Literal["composed_first", "saliency_first"]] = None


class ActionRequest(BaseModel):
    dx: int
    dy: int
    step: int


class QuestionnaireRequest(BaseModel):
    understand: int = Field(ge=1, le=5)
    satisfying: int = Field(ge=1, le=5)
    detailed: int = Field(ge=1, le=5)
    complete: int = Field(ge=1, le=5)
    actionable: int = Field(ge=1, le=5)
    reliable: int = Field(ge=1, le=5)
    trustworthy: int = Field(ge=1, le=5)
    followed_advice: int = Field(ge=1, le=5)
    confidence: int = Field(ge=1, le=5)
    strategy: str = ""
    attention_checks: list[str] = Field(min_length=3, max_length=3)
    # study wrap-up items; usually submitted with the final questionnaire only
    age: str = ""
    gender: str = ""
    education: str = ""
    country: str = ""


class GameService:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.grid = GridSpec(config.grid_size, config.grid_size)
        self.demand = desk_demand_model(self.grid)
        self.poi = np.zeros((self.grid.height, self.grid.width))
        self.predictor, self.qnet, self.trained = self._load_models()
        self.sessions: dict[str, Session] = {}
        self._order: list[str] = []  # creation order, for export stability
        self._alternation = 0
        self._total_created = 0
        self._lock = threading.Lock()
        config.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = config.data_dir / "events.jsonl"
        self._replay_log()
        self._log_file = open(self.log_path, "a", encoding="utf-8")
        if self._fresh_log:
            self._append({"event": "meta", "seed": config.seed,
                          "grid_size": config.grid_size})

    # -- models ---------------------------------------------------------------

    def _load_models(self):
        cfg = self.config
        if cfg.model_dir is not None:
            pred_path = Path(cfg.model_dir) / "taxi-predictor.ckpt"
            q_path = Path(cfg.model_dir) / f"taxi-{cfg.grid_size}-qnet.ckpt"
            if pred_path.exists() and q_path.exists():
                return load_predictor(pred_path), load_qnetwork(q_path), True
        net = Mlp(TAXI_WIDTHS, TAXI_ACTIVATIONS, seed=cfg.seed)
        pred = CellPredictor(
            TrainedMlp(net, np.zeros(20), np.ones(20)), "taxi", TAXI_FEATURES, True
        )
        qnet = QNetwork(
            QNetConfig(cfg.grid_size, cfg.grid_size, 2, 25, seed=cfg.seed)
        )
        return pred, qnet, False

    # -- persistence ----------------------------------------------------------

    def _append(self, doc: dict) -> None:
        doc = dict(doc, ts=datetime.now(timezone.utc).isoformat())
        self._log_file.write(json.dumps(doc) + "\n")
        self._log_file.flush()

    def _replay_log(self) -> None:
        self._fresh_log = not self.log_path.exists()
        if self._fresh_log:
            return
        with open(self.log_path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                doc = json.loads(line)
                event = doc.get("event")
                if event == "meta":
                    if doc.get("seed") != self.config.seed or doc.get("grid_size") != self.config.grid_size:
                        raise RuntimeError(
                            "event log was produced under a different seed/grid; "
                            "refusing to mix histories"
                        )
                elif event == "create":
                    session = Session(id=doc["id"], seed=doc["seed"], order=tuple(doc["order"]))
                    self._start_trial(session)
                    self.sessions[session.id] = session
                    self._order.append(session.id)
                    self._total_created += 1
                    if not doc.get("hinted"):
                        self._alternation += 1
                elif event == "action":
                    session = self.sessions[doc["id"]]
                    self._apply_action(
                        session, Displacement(doc["dx"], doc["dy"]), doc["decision_ms"]
                    )
                elif event == "questionnaire":
                    session = self.sessions[doc["id"]]
                    self._apply_questionnaire(session, doc["payload"])

    # -- session lifecycle ----------------------------------------------------

    def _start_trial(self, session: Session) -> None:
        trial_seed = session.seed + session.trial_index
        session.rng = np.random.default_rng(trial_seed)
        session.env_state = new_episode(
            self.grid, self.demand, session.rng, fleet_size=self.config.fleet_size
        )
        session.step = 0
        session.last_cell = None
        session.payload = None
        session.advised = None
        session.served_monotonic = None

    def create_session(self, order_hint: Optional[str] = None) -> Session:
        with self._lock:
            if order_hint == "composed_first":
                order = ("composed", "saliency")
            elif order_hint == "saliency_first":
                order = ("saliency", "composed")
            else:
                order = CONDITIONS if self._alternation % 2 == 0 else CONDITIONS[::-1]
                self._alternation += 1
            seed = self.config.seed * 1_000_003 + self._total_created
            self._total_created += 1
            session = Session(id=uuid.uuid4().hex, seed=seed, order=tuple(order))
            self._start_trial(session)
            self.sessions[session.id] = session
            self._order.append(session.id)
            self._append({
                "event": "create", "id": session.id, "seed": seed,
                "order": list(order), "hinted": order_hint is not None,
            })
            return session

    def _get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    def _compute_advice(self, session: Session) -> Displacement:
        state = session.env_state
        prediction = predict_grid(self.predictor, state, poi=self.poi)
        return TAXI_ACTIONS[advise(self.qnet, build_sigma(state, prediction))]

    def _build_payload(self, session: Session) -> dict:
        state = session.env_state
        if session.condition == "composed":
            explanation = generate_composed(
                self.predictor, self.qnet, state,
                shap_samples=self.config.shap_samples,
                seed=session.seed + session.step, poi=self.poi,
            ).to_json_dict()
            advised = TAXI_ACTIONS[explanation["advised_action"]]
        else:
            explanation = generate_baseline(
                self.predictor, self.qnet, state,
                n_samples=self.config.lime_samples,
                seed=session.seed + session.step, poi=self.poi,
            ).to_json_dict()
            advised = self._compute_advice(session)
        advised_cell = clip_move(state.taxi, advised, self.grid)
        session.advised = advised
        payload = {
            "schema": 1,
            "session_id": session.id,
            "condition": session.condition,
            "trial_index": session.trial_index,
            "step": session.step,
            "steps_per_trial": TRIAL_STEPS,
            "grid": {"width": self.grid.width, "height": self.grid.height},
            "current": {"x": state.taxi.x, "y": state.taxi.y},
            "last": (
                {"x": session.last_cell.x, "y": session.last_cell.y}
                if session.last_cell else None
            ),
            "advised": {
                "dx": advised.dx, "dy": advised.dy,
                "cell": {"x": advised_cell.x, "y": advised_cell.y},
            },
            "occupied": state.occupied,
            "accumulated_reward": session.accumulated_reward,
            "requests": state.requests.tolist(),
            "explanation": explanation,
        }
        return payload

    def get_step(self, session_id: str) -> dict:
        session = self._get(session_id)
        with session.lock:
            if session.complete:
                raise HTTPException(status_code=410, detail="session finished")
            if session.awaiting_questionnaire:
                raise HTTPException(
                    status_code=409,
                    detail="trial finished; submit the questionnaire to continue",
                )
            if session.payload is None:
                session.payload = self._build_payload(session)
                session.served_monotonic = time.monotonic()
            return session.payload

    def _apply_action(self, session: Session, action: Displacement, decision_ms: float) -> dict:
        if session.advised is None:
            # action posted without fetching the payload (or log replay):
            # the advice is still recorded, the decision clock never started
            session.advised = self._compute_advice(session)
        advised = session.advised
        state, reward = taxi_step(session.env_state, action, self.demand, session.rng)
        session.last_cell = session.env_state.taxi
        session.env_state = state
        session.accumulated_reward += reward
        record = StepRecord(
            trial_index=session.trial_index,
            step=session.step,
            condition=session.condition,
            advised=advised,
            chosen=action,
            reward=reward,
            decision_time_ms=decision_ms,
        )
        session.records.append(record)
        session.step += 1
        session.payload = None
        session.advised = None
        session.served_monotonic = None
        trial_complete = session.step >= TRIAL_STEPS
        if trial_complete:
            session.awaiting_questionnaire = True
        return {
            "reward": reward,
            "followed": record.followed,
            "accumulated_reward": session.accumulated_reward,
            "step": session.step,
            "trial_index": session.trial_index,
            "trial_complete": trial_complete,
            "session_complete": session.complete,
        }

    def post_action(self, session_id: str, body: ActionRequest) -> dict:
        session = self._get(session_id)
        with session.lock:
            if session.complete:
                raise HTTPException(status_code=410, detail="session finished")
            if session.awaiting_questionnaire:
                raise HTTPException(status_code=409, detail="questionnaire pending")
            if abs(body.dx) > MAX_MOVE or abs(body.dy) > MAX_MOVE:
                raise HTTPException(
                    status_code=422,
                    detail=f"displacement outside the ±{MAX_MOVE} action space",
                )
            if body.step != session.step:
                raise HTTPException(
                    status_code=409,
                    detail=f"out-of-order step: server is at {session.step}, got {body.step}",
                )
            decision_ms = 0.0
            if session.served_monotonic is not None:
                decision_ms = max(0.0, (time.monotonic() - session.served_monotonic) * 1000.0)
            outcome = self._apply_action(session, Displacement(body.dx, body.dy), decision_ms)
            self._append({
                "event": "action", "id": session.id, "trial": session.trial_index,
                "step": body.step, "dx": body.dx, "dy": body.dy,
                "decision_ms": decision_ms,
            })
            return outcome

    def _apply_questionnaire(self, session: Session, payload: dict) -> None:
        trial = session.trial_index
        session.questionnaires[trial] = dict(payload, condition=session.condition)
        session.awaiting_questionnaire = False
        if trial + 1 < TRIALS:
            session.trial_index += 1
            session.accumulated_reward = 0.0
            self._start_trial(session)
        else:
            session.complete = True

    def post_questionnaire(self, session_id: str, body: QuestionnaireRequest) -> dict:
        session = self._get(session_id)
        with session.lock:
            if session.complete:
                raise HTTPException(status_code=410, detail="session finished")
            if not session.awaiting_questionnaire:
                raise HTTPException(
                    status_code=409, detail="no completed trial awaiting a questionnaire"
                )
            payload = body.model_dump()
            self._apply_questionnaire(session, payload)
            self._append({
                "event": "questionnaire", "id": session.id,
                "trial": session.trial_index if session.complete else session.trial_index - 1,
                "payload": payload,
            })
            return {
                "ok": True,
                "session_complete": session.complete,
                "next_trial_index": None if session.complete else session.trial_index,
            }

    # -- export ---------------------------------------------------------------

    def export_game_log(self) -> str:
        buf = StringIO()
        writer = csv.writer(buf)
        writer.writerow(GAME_LOG_COLUMNS)
        for sid in self._order:
            session = self.sessions[sid]
            for r in session.records:
                writer.writerow([
                    sid, r.condition, r.trial_index, r.step,
                    r.advised.dx, r.advised.dy, r.chosen.dx, r.chosen.dy,
                    r.followed, repr(r.reward), repr(r.decision_time_ms),
                ])
        return buf.getvalue()

    def export_questionnaires(self) -> str:
        buf = StringIO()
        writer = csv.writer(buf)
        writer.writerow(QUESTIONNAIRE_COLUMNS)
        for sid in self._order:
            session = self.sessions[sid]
            for trial in sorted(session.questionnaires):
                q = session.questionnaires[trial]
                writer.writerow([
                    sid, q["condition"],
                    *(q[item] for item in LIKERT_ITEMS),
                    *(q[item] for item in USAGE_ITEMS),
                    q.get("strategy", ""),
                    *q.get("attention_checks", ["", "", ""]),
                    *(q.get(item, "") for item in DEMOGRAPHIC_ITEMS),
                ])
        return buf.getvalue()


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    config = config or ServiceConfig.from_env()
    service = GameService(config)
    app = FastAPI(title="gridadvice game service")
    app.state.service = service

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "trained_models": service.trained}

    @app.post("/sessions")
    def create_session(body: CreateSessionRequest):
        session = service.create_session(body.order_hint)
        return {
            "id": session.id,
            "condition_order": list(session.order),
            "steps_per_trial": TRIAL_STEPS,
            "trials": TRIALS,
        }

    @app.get("/sessions/{session_id}/step")
    def get_step(session_id: str):
        return service.get_step(session_id)

    @app.post("/sessions/{session_id}/action")
    def post_action(session_id: str, body: ActionRequest):
        return service.post_action(session_id, body)

    @app.post("/sessions/{session_id}/questionnaire")
    def post_questionnaire(session_id: str, body: QuestionnaireRequest):
        return service.post_questionnaire(session_id, body)

    @app.get("/export/game_log.csv", response_class=PlainTextResponse)
    def export_game_log():
        return PlainTextResponse(service.export_game_log(), media_type="text/csv")

    @app.get("/export/questionnaire_response.csv", response_class=PlainTextResponse)
    def export_questionnaires():
        return PlainTextResponse(service.export_questionnaires(), media_type="text/csv")

    if config.wildfire_demo:

        @app.get("/demo/wildfire")
        def wildfire_demo(seed: int = 0):
            from .bench import _fresh_models
            from .explain import render_heatmap
            from .grid import GridSpec
            from .training import model_paths
            from .wildfire import FireParams, new_fire_episode

            pred = qnet = None
            if config.model_dir is not None:
                pred_path, q_path = model_paths(config.model_dir, "wildfire", config.grid_size)
                if pred_path.exists() and q_path.exists():
                    from .dqn import load_qnetwork
                    from .predictor import load_predictor

                    pred, qnet = load_predictor(pred_path), load_qnetwork(q_path)
            if pred is None:
                pred, qnet = _fresh_models("wildfire", config.grid_size, config.seed)
            state = new_fire_episode(
                GridSpec(config.grid_size, config.grid_size), FireParams(),
                np.random.default_rng(seed),
            )
            explanation = generate_composed(pred, qnet, state,
                                            shap_samples=config.shap_samples, seed=seed)
            svg, payload = render_heatmap(explanation)
            return {"svg": svg, "explanation": payload}

    static = config.static_dir
    if static is not None and Path(static).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static, html=True), name="ui")

    return app
