import csv
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient

from gridadvice.grid import Displacement, GridSpec
from gridadvice.service import GameService, ServiceConfig, create_app
from gridadvice.taxi import desk_demand_model, new_episode, replay_episode


def make_config(tmp_path, **overrides):
    defaults = dict(
        data_dir=tmp_path / "data", seed=3, grid_size=5, fleet_size=5,
        lime_samples=40, shap_samples=32,
    )
    defaults.update(overrides)
    return ServiceConfig(**defaults)


@pytest.fixture
def client(tmp_path):
    app = create_app(make_config(tmp_path))
    with TestClient(app) as c:
        yield c


def create_session(client, order_hint=None):
    body = {} if order_hint is None else {"order_hint": order_hint}
    res = client.post("/sessions", json=body)
    assert res.status_code == 200
    return res.json()


def play_trial(client, sid, follow=True, deviate_steps=()):
    rewards = []
    for step in range(12):
        payload = client.get(f"/sessions/{sid}/step").json()
        advised = payload["advised"]
        if follow and step not in deviate_steps:
            dx, dy = advised["dx"], advised["dy"]
        else:
            dx, dy = (1, 0) if (advised["dx"], advised["dy"]) != (1, 0) else (0, 1)
        res = client.post(f"/sessions/{sid}/action", json={"dx": dx, "dy": dy, "step": step})
        assert res.status_code == 200
        rewards.append(res.json()["reward"])
    return rewards


QUESTIONNAIRE = {
    "understand": 4, "satisfying": 5, "detailed": 3, "complete": 4,
    "actionable": 4, "reliable": 3, "trustworthy": 4,
    "followed_advice": 5, "confidence": 2, "strategy": "followed the blue square",
    "attention_checks": ["yellow", "two", "maximize"],
}


def finish_session(client, sid):
    play_trial(client, sid)
    client.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE)
    play_trial(client, sid)
    client.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE)


class TestSessionCreation:
    def test_counterbalanced_alternation(self, client):
        a = create_session(client)
        b = create_session(client)
        assert a["condition_order"] != b["condition_order"]
        assert set(a["condition_order"]) == {"composed", "saliency"}

    def test_order_hint_respected(self, client):
        s = create_session(client, "saliency_first")
        assert s["condition_order"] == ["saliency", "composed"]

    def test_new_session_starts_clean(self, client):
        sid = create_session(client)["id"]
        payload = client.get(f"/sessions/{sid}/step").json()
        assert payload["step"] == 0
        assert payload["accumulated_reward"] == 0
        assert payload["last"] is None

    def test_ids_unique(self, tmp_path):
        service = GameService(make_config(tmp_path, grid_size=4, fleet_size=0))
        ids = {service.create_session().id for _ in range(10_000)}
        assert len(ids) == 10_000


class TestGetStep:
    def test_composed_payload_has_indices_and_arrows(self, client):
        sid = create_session(client, "composed_first")["id"]
        payload = client.get(f"/sessions/{sid}/step").json()
        exp = payload["explanation"]
        assert exp["kind"] == "composed"
        assert "indices" in exp and "actions" in exp and "delta" in exp
        assert "maps" not in exp

    def test_saliency_payload_has_seven_maps(self, client):
        sid = create_session(client, "saliency_first")["id"]
        payload = client.get(f"/sessions/{sid}/step").json()
        exp = payload["explanation"]
        assert exp["kind"] == "saliency"
        assert len(exp["maps"]) == 7
        assert len(exp["global_influences"]) == 13

    def test_idempotent_read(self, client):
        sid = create_session(client)["id"]
        a = client.get(f"/sessions/{sid}/step").json()
        b = client.get(f"/sessions/{sid}/step").json()
        assert a == b

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/step").status_code == 404

    def test_finished_session_410(self, client):
        sid = create_session(client)["id"]
        finish_session(client, sid)
        assert client.get(f"/sessions/{sid}/step").status_code == 410


class TestPostAction:
    def test_followed_flag(self, client):
        sid = create_session(client)["id"]
        payload = client.get(f"/sessions/{sid}/step").json()
        advised = payload["advised"]
        res = client.post(
            f"/sessions/{sid}/action",
            json={"dx": advised["dx"], "dy": advised["dy"], "step": 0},
        ).json()
        assert res["followed"] is True

    def test_twelve_actions_complete_trial(self, client):
        sid = create_session(client)["id"]
        for step in range(12):
            res = client.post(
                f"/sessions/{sid}/action", json={"dx": 0, "dy": 0, "step": step}
            ).json()
        assert res["trial_complete"] is True
        assert client.get(f"/sessions/{sid}/step").status_code == 409

    def test_invalid_action_422(self, client):
        sid = create_session(client)["id"]
        res = client.post(f"/sessions/{sid}/action", json={"dx": 3, "dy": 0, "step": 0})
        assert res.status_code == 422

    def test_out_of_order_step_409(self, client):
        sid = create_session(client)["id"]
        res = client.post(f"/sessions/{sid}/action", json={"dx": 0, "dy": 0, "step": 5})
        assert res.status_code == 409

    def test_decision_time_nonnegative(self, client):
        sid = create_session(client)["id"]
        finish_session(client, sid)
        text = client.get("/export/game_log.csv").text
        rows = list(csv.DictReader(io.StringIO(text)))
        assert all(float(r["decision_time_ms"]) >= 0 for r in rows)


class TestQuestionnaire:
    def test_rating_out_of_range_rejected(self, client):
        sid = create_session(client)["id"]
        play_trial(client, sid)
        bad = dict(QUESTIONNAIRE, satisfying=6)
        assert client.post(f"/sessions/{sid}/questionnaire", json=bad).status_code == 422

    def test_rejected_before_trial_complete(self, client):
        sid = create_session(client)["id"]
        res = client.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE)
        assert res.status_code == 409

    def test_bound_to_played_condition(self, client):
        sid_info = create_session(client, "saliency_first")
        sid = sid_info["id"]
        finish_session(client, sid)
        text = client.get("/export/questionnaire_response.csv").text
        rows = list(csv.DictReader(io.StringIO(text)))
        ours = [r for r in rows if r["session_id"] == sid]
        assert [r["condition"] for r in ours] == ["saliency", "composed"]

    def test_session_completes_after_both(self, client):
        sid = create_session(client)["id"]
        play_trial(client, sid)
        res = client.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE).json()
        assert res["session_complete"] is False and res["next_trial_index"] == 1
        play_trial(client, sid)
        res = client.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE).json()
        assert res["session_complete"] is True


class TestExport:
    def test_game_log_shape_and_consistency(self, client):
        sid = create_session(client)["id"]
        finish_session(client, sid)
        text = client.get("/export/game_log.csv").text
        rows = list(csv.DictReader(io.StringIO(text)))
        assert len(rows) == 24  # 2 trials x 12 steps
        for r in rows:
            followed = (r["advised_dx"], r["advised_dy"]) == (r["chosen_dx"], r["chosen_dy"])
            assert r["followed"] == str(followed)

    def test_round_trip(self, client):
        sid = create_session(client)["id"]
        finish_session(client, sid)
        text = client.get("/export/game_log.csv").text
        rows = list(csv.DictReader(io.StringIO(text)))
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=rows[0].keys())
        writer.writeheader()
        writer.writerows(rows)
        assert list(csv.DictReader(io.StringIO(buf.getvalue()))) == rows

    def test_reward_column_replays_against_simulator(self, client, tmp_path):
        sid = create_session(client)["id"]
        play_trial(client, sid, follow=True, deviate_steps=(3, 7))
        client.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE)
        play_trial(client, sid)
        client.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE)

        text = client.get("/export/game_log.csv").text
        rows = [r for r in csv.DictReader(io.StringIO(text)) if r["session_id"] == sid]
        service = client.app.state.service
        session = service.sessions[sid]
        grid = GridSpec(5, 5)
        demand = service.demand
        for trial in (0, 1):
            trial_rows = [r for r in rows if int(r["trial_index"]) == trial]
            actions = [Displacement(int(r["chosen_dx"]), int(r["chosen_dy"])) for r in trial_rows]
            rng = np.random.default_rng(session.seed + trial)
            start = new_episode(grid, demand, rng, fleet_size=5)
            _, rewards = replay_episode(start, actions, demand, rng)
            assert rewards == [float(r["reward"]) for r in trial_rows]

    def test_accumulated_reward_equals_logged_sum(self, client):
        sid = create_session(client)["id"]
        rewards = play_trial(client, sid)
        payload_sum = sum(rewards)
        res = client.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE)
        text = client.get("/export/game_log.csv").text
        rows = [r for r in csv.DictReader(io.StringIO(text)) if r["session_id"] == sid]
        assert sum(float(r["reward"]) for r in rows) == pytest.approx(payload_sum)


class TestPersistence:
    def test_crash_recovery_by_replay(self, tmp_path):
        config = make_config(tmp_path)
        app = create_app(config)
        with TestClient(app) as client:
            sid = create_session(client)["id"]
            play_trial(client, sid)
            client.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE)
            play_trial(client, sid, follow=False)
            before = client.get("/export/game_log.csv").text

        app2 = create_app(make_config(tmp_path))
        with TestClient(app2) as client2:
            after = client2.get("/export/game_log.csv").text
            assert after == before
            # the recovered session continues where it left off
            res = client2.post(f"/sessions/{sid}/questionnaire", json=QUESTIONNAIRE)
            assert res.status_code == 200 and res.json()["session_complete"] is True

    def test_mismatched_history_rejected(self, tmp_path):
        config = make_config(tmp_path)
        app = create_app(config)
        with TestClient(app) as client:
            create_session(client)
        with pytest.raises(RuntimeError, match="different seed"):
            create_app(make_config(tmp_path, seed=99))


def test_healthz(client):
    res = client.get("/healthz")
    assert res.status_code == 200
    assert res.json()["status"] == "ok"


def test_wildfire_demo_behind_flag(tmp_path):
    app = create_app(make_config(tmp_path, wildfire_demo=True, grid_size=5))
    with TestClient(app) as client:
        res = client.get("/demo/wildfire", params={"seed": 2})
        assert res.status_code == 200
        body = res.json()
        assert body["svg"].startswith("<svg")
        assert body["explanation"]["kind"] == "composed"
        assert body["explanation"]["domain"] == "wildfire"

    plain = create_app(make_config(tmp_path / "b"))
    with TestClient(plain) as client:
        assert client.get("/demo/wildfire").status_code == 404
