from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridadvice.dqn import DrlInput, QNetConfig, QNetwork, build_sigma
from gridadvice.explain import (
    ComposedExplanation,
    FIRE_PALETTE,
    PaletteConfig,
    SaliencyExplanation,
    TAXI_PALETTE,
    explanation_size,
    feature_list_budget,
    fire_index,
    generate_baseline,
    generate_composed,
    importance_map,
    policy_path,
    render_heatmap,
    taxi_index,
)
from gridadvice.grid import Cell, GridSpec
from gridadvice.nn import Mlp
from gridadvice.predictor import (
    FIRE_FEATURES,
    TAXI_FEATURES,
    CellPredictor,
    TrainedMlp,
    WeatherRow,
)
from gridadvice.taxi import TAXI_ACTIONS, TaxiState, desk_demand_model, new_episode
from gridadvice.wildfire import FireParams, new_fire_episode


class TabularQ:
    """Test double: a fixed q-vector per cell, independent of the channels."""

    def __init__(self, table: dict, action_count: int):
        self.table = table
        self.action_count = action_count

    def q_values_cells(self, sigma, cells):
        return np.stack([np.asarray(self.table[c], dtype=np.float64) for c in cells])


def uniform_sigma(grid: GridSpec, agent=Cell(0, 0), channels=1):
    return DrlInput(np.zeros((channels, grid.height, grid.width)), agent, grid)


class TestTaxiIndex:
    def test_no_taxis_means_zero(self):
        rho = np.array([[2.0, 1.0], [0.5, 3.0]])
        tau = np.zeros((2, 2))
        assert (taxi_index(rho, tau) == 0).all()

    def test_hand_case(self):
        rho = np.array([[2.0, 0.0], [1.0, 1.0]])
        tau = np.array([[1.0, 1.0], [1.0, 1.0]])
        out = taxi_index(rho, tau, eta=0.75)
        assert out[0, 0] == pytest.approx(0.75 * 2 + 0.25 * 2)  # == 2.0

    def test_zero_demand_cell(self):
        rho = np.array([[0.0, 1.0], [1.0, 1.0]])
        tau = np.array([[3.0, 1.0], [1.0, 1.0]])
        assert taxi_index(rho, tau)[0, 0] == 0.0

    def test_all_zero_demand_total(self):
        rho = np.zeros((2, 2))
        tau = np.ones((2, 2))
        assert (taxi_index(rho, tau) == 0).all()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 50.0))
    def test_scale_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        rho = rng.random((3, 4)) * 3
        tau = rng.integers(0, 3, size=(3, 4)).astype(float)
        np.testing.assert_allclose(
            taxi_index(rho * c, tau * c), taxi_index(rho, tau), atol=1e-9
        )

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            taxi_index(np.array([[-1.0]] * 2), np.ones((2, 1)))


class TestFireIndex:
    def test_burning_extreme(self):
        out = fire_index(np.array([[1.0]]), np.array([[1.0]]), np.array([[True]]))
        assert out[0, 0] == -1.0

    def test_calm_extreme(self):
        out = fire_index(np.array([[0.0]]), np.array([[0.0]]), np.array([[False]]))
        assert out[0, 0] == 1.0

    def test_hand_case(self):
        out = fire_index(np.array([[0.5]]), np.array([[0.8]]), np.array([[True]]))
        assert out[0, 0] == pytest.approx(-0.4)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            fire_index(np.array([[1.5]]), np.array([[0.5]]), np.array([[False]]))
        with pytest.raises(ValueError):
            fire_index(np.array([[0.5]]), np.array([[-0.1]]), np.array([[False]]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_range_and_sign(self, seed):
        rng = np.random.default_rng(seed)
        theta = rng.random((4, 4))
        mu = rng.random((4, 4))
        burning = rng.random((4, 4)) < 0.4
        out = fire_index(theta, mu, burning)
        assert (out >= -1).all() and (out <= 1).all()
        negative = out < 0
        assert (negative <= (burning & (theta * mu > 0))).all()


class TestImportanceMap:
    def test_spread_and_normalization(self):
        grid = GridSpec(3, 1 + 1)  # 3x2
        table = {}
        spreads = {Cell(0, 0): (3.0, 1.0), Cell(1, 0): (4.0, 2.0), Cell(2, 0): (6.0, 2.0)}
        for cell in grid.cells():
            hi, lo = spreads.get(cell, (1.0, 1.0))
            table[cell] = np.array([hi, lo, (hi + lo) / 2])
        model = TabularQ(table, 3)
        actions, delta = importance_map(model, uniform_sigma(grid))
        # spreads: 2, 2, 4 on the top row, 0 elsewhere -> normalized by (0, 4)
        assert delta[0, 0] == pytest.approx(0.5)
        assert delta[0, 2] == pytest.approx(1.0)
        assert delta[1, 1] == 0.0
        assert (actions[0] == 0).all()  # hi value sits at index 0

    def test_hand_spread(self):
        grid = GridSpec(2, 2)
        table = {c: np.array([3.0, 1.0, 2.0]) for c in grid.cells()}
        _, delta = importance_map(TabularQ(table, 3), uniform_sigma(grid))
        assert (delta == 0).all()  # constant spread normalizes to zero

    def test_delta_formula(self):
        grid = GridSpec(3, 2)
        values = {0: 0.0, 1: 2.0, 2: 4.0}
        table = {}
        for cell in grid.cells():
            spread = values[cell.x]
            table[cell] = np.array([spread, 0.0])
        _, delta = importance_map(TabularQ(table, 2), uniform_sigma(grid))
        np.testing.assert_allclose(delta[0], [0.0, 0.5, 1.0])


class TestPolicyPath:
    def test_stay_at_start(self):
        grid = GridSpec(3, 3)
        table = {c: np.eye(25)[12] for c in grid.cells()}  # argmax at stay
        path = policy_path(TabularQ(table, 25), uniform_sigma(grid), Cell(1, 1))
        assert path == [("A", Cell(1, 1))]

    def test_straight_line_gets_six_labels(self):
        grid = GridSpec(10, 2)
        east = np.zeros(25)
        east[13] = 1.0  # displacement (1, 0)
        table = {c: east for c in grid.cells()}
        path = policy_path(TabularQ(table, 25), uniform_sigma(grid), Cell(0, 0))
        assert [lab for lab, _ in path] == ["A", "B", "C", "D", "E", "F"]
        assert path[-1][1] == Cell(5, 0)

    def test_cycle_terminates(self):
        grid = GridSpec(4, 2)
        east = np.zeros(25)
        east[13] = 1.0
        west = np.zeros(25)
        west[11] = 1.0  # displacement (-1, 0)
        table = {c: (east if c.x == 0 else west) for c in grid.cells()}
        path = policy_path(TabularQ(table, 25), uniform_sigma(grid), Cell(0, 0))
        assert [c for _, c in path] == [Cell(0, 0), Cell(1, 0)]

    def test_wildfire_extinguish_stops_path(self):
        grid = GridSpec(3, 3)
        ext = np.eye(6)[0]
        table = {c: ext for c in grid.cells()}
        path = policy_path(TabularQ(table, 6), uniform_sigma(grid), Cell(1, 1),
                           domain="wildfire")
        assert path == [("A", Cell(1, 1))]


# -- the hand-built 3x3 fixture ------------------------------------------------

FIXTURE_WEIGHTS = {
    "cell_x": 0.1, "cell_y": -0.06, "requests_m20": 0.02, "requests_m10": -0.5,
    "requests_now": 1.0, "poi_count": 0.25, "hour": 0.005, "minute": 0.0005,
    "month": -0.002, "temperature": 0.01, "wind": 0.004, "humidity": -0.001,
}
FIXTURE_BIAS = 2.0
NOW = np.array([[2, 0, 1], [1, 3, 0], [0, 1, 1]], dtype=np.float64)
M10 = np.array([[1, 1, 0], [0, 2, 1], [1, 0, 3]], dtype=np.float64)
M20 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=np.float64)
POI = np.array([[1, 0, 2], [0, 1, 0], [3, 0, 1]], dtype=np.float64)
TAU = np.array([[1, 0, 2], [1, 1, 0], [3, 1, 1]], dtype=np.float64)
FIXTURE_WEATHER = WeatherRow(temperature=15, wind=5, humidity=40, air_pressure=1013)
# clock 2015-06-03 10:30 is a Wednesday: hour 10, minute 30, weekday 2, month 6
FIXTURE_CLOCK = datetime(2015, 6, 3, 10, 30)


def fixture_predictor() -> CellPredictor:
    net = Mlp([20, 1], ["identity"], seed=0)
    w = np.zeros((20, 1))
    for name, value in FIXTURE_WEIGHTS.items():
        w[TAXI_FEATURES.index(name), 0] = value
    net.layers[0].W.value = w
    net.layers[0].b.value = np.array([FIXTURE_BIAS])
    trained = TrainedMlp(net, np.zeros(20), np.ones(20))
    return CellPredictor(trained, "taxi", TAXI_FEATURES, clamp_nonneg=True)


def fixture_state() -> TaxiState:
    grid = GridSpec(3, 3)
    return TaxiState(
        grid=grid, taxi=Cell(1, 1), occupied=False, trip_remaining=0,
        trip_destination=None, requests=NOW.copy(), taxis=TAU.copy(), step=0,
        clock=FIXTURE_CLOCK, request_history=(NOW, M10, M20, np.zeros((3, 3))),
    )


def fixture_qtable() -> TabularQ:
    # (argmax index, max, min): the argmax drives the path
    # A(1,1) -e-> B(2,1) -s-> C(2,2) -(-2,-2)-> D(0,0) -stay-> end
    spec = {
        Cell(0, 0): (12, 2.5, 2.0),
        Cell(1, 0): (0, 1.0, 0.0),
        Cell(2, 0): (3, 2.0, 0.0),
        Cell(0, 1): (7, 0.0, -1.0),
        Cell(1, 1): (13, 4.0, -1.0),
        Cell(2, 1): (17, 3.0, 1.0),
        Cell(0, 2): (24, 1.5, 1.0),
        Cell(1, 2): (12, 2.0, 1.5),
        Cell(2, 2): (0, 6.0, 2.0),
    }
    table = {}
    for cell, (amax, hi, lo) in spec.items():
        q = np.full(25, lo)
        q[amax] = hi
        table[cell] = q
    return TabularQ(table, 25)


# manual evaluation of the prediction at every cell:
# rho = bias + global weather/clock terms (0.183) + per-cell terms
EXPECTED_RHO = np.array(
    [
        [2.183 + 1.75, 2.183 - 0.38, 2.183 + 1.70],
        [2.183 + 0.96, 2.183 + 2.29, 2.183 - 0.34],
        [2.183 + 0.13, 2.183 + 1.00, 2.183 - 0.17],
    ]
)
EXPECTED_RHO_SUM = 26.587

EXPECTED_TOP6 = {
    "A": [("requests_now", 3.0), ("requests_m10", -1.0), ("poi_count", 0.25),
          ("temperature", 0.15), ("cell_x", 0.1), ("cell_y", -0.06)],
    "B": [("requests_m10", -0.5), ("cell_x", 0.2), ("temperature", 0.15),
          ("cell_y", -0.06), ("hour", 0.05), ("humidity", -0.04)],
    "C": [("requests_m10", -1.5), ("requests_now", 1.0), ("poi_count", 0.25),
          ("cell_x", 0.2), ("temperature", 0.15), ("cell_y", -0.12)],
    "D": [("requests_now", 2.0), ("requests_m10", -0.5), ("poi_count", 0.25),
          ("temperature", 0.15), ("hour", 0.05), ("humidity", -0.04)],
}


@pytest.fixture(scope="module")
def fixture_explanation():
    return generate_composed(
        fixture_predictor(), fixture_qtable(), fixture_state(),
        poi=POI, weather=FIXTURE_WEATHER, shap_samples=512, seed=0,
    )


class TestHandBuiltFixture:
    @pytest.fixture
    def explanation(self, fixture_explanation):
        return fixture_explanation

    def test_indices_match_hand_computation(self, explanation):
        expected = np.zeros((3, 3))
        for y in range(3):
            for x in range(3):
                rho, tau = EXPECTED_RHO[y, x], TAU[y, x]
                if tau > 0:
                    expected[y, x] = 0.75 * rho / tau + 0.25 * rho * 9 / EXPECTED_RHO_SUM
        np.testing.assert_allclose(explanation.indices, expected, atol=1e-9)

    def test_actions_match_table(self, explanation):
        expected = np.array([[12, 0, 3], [7, 13, 17], [24, 12, 0]])
        np.testing.assert_array_equal(explanation.actions, expected)
        assert explanation.advised_action == 13

    def test_delta_matches_hand_computation(self, explanation):
        spreads = np.array([[0.5, 1.0, 2.0], [1.0, 5.0, 2.0], [0.5, 0.5, 4.0]])
        expected = (spreads - 0.5) / 4.5
        np.testing.assert_allclose(explanation.delta, expected, atol=1e-12)

    def test_path_and_labels(self, explanation):
        assert [(lab, cell) for lab, cell, _ in explanation.feature_lists] == [
            ("A", Cell(1, 1)), ("B", Cell(2, 1)), ("C", Cell(2, 2)), ("D", Cell(0, 0)),
        ]

    def test_top6_feature_lists(self, explanation):
        for label, _, features in explanation.feature_lists:
            expected = EXPECTED_TOP6[label]
            assert [n for n, _ in features] == [n for n, _ in expected], label
            for (_, got), (_, want) in zip(features, expected):
                assert got == pytest.approx(want, abs=1e-5), label


def tiny_taxi_setup(grid=GridSpec(4, 4), seed=0):
    demand = desk_demand_model(grid)
    state = new_episode(grid, demand, np.random.default_rng(seed))
    net = Mlp([20, 8, 1], ["relu", "identity"], seed=1)
    pred = CellPredictor(TrainedMlp(net, np.zeros(20), np.ones(20)), "taxi",
                         TAXI_FEATURES, True)
    qnet = QNetwork(QNetConfig(grid.width, grid.height, 2, 25, (4,), (3,), 32, 16, seed=2))
    return state, pred, qnet


def tiny_fire_setup(grid=GridSpec(4, 4), seed=0):
    state = new_fire_episode(grid, FireParams(), np.random.default_rng(seed))
    net = Mlp([6, 8, 1], ["leaky_relu", "sigmoid"], seed=1)
    pred = CellPredictor(TrainedMlp(net, np.zeros(6), np.ones(6)), "wildfire",
                         FIRE_FEATURES, False)
    qnet = QNetwork(QNetConfig(grid.width, grid.height, 3, 6, (4,), (3,), 32, 16, seed=2))
    return state, pred, qnet


class TestGenerateComposed:
    def test_structure(self):
        state, pred, qnet = tiny_taxi_setup()
        e = generate_composed(pred, qnet, state, shap_samples=64, seed=0)
        assert e.actions.shape == (4, 4) and e.delta.shape == (4, 4)
        assert ((e.delta >= 0) & (e.delta <= 1)).all()
        assert 1 <= len(e.feature_lists) <= 6
        assert e.feature_lists[0][1] == state.taxi

    def test_wildfire_domain(self):
        state, pred, qnet = tiny_fire_setup()
        e = generate_composed(pred, qnet, state, shap_samples=64, seed=0)
        assert e.domain == "wildfire"
        assert ((e.indices >= -1) & (e.indices <= 1)).all()
        assert all(len(f) == 6 for _, _, f in e.feature_lists)


class TestGenerateBaseline:
    def test_taxi_map_partition(self):
        state, pred, qnet = tiny_taxi_setup()
        e = generate_baseline(pred, qnet, state, n_samples=80, seed=0)
        assert len(e.maps) == 7
        assert len(e.global_influences) == 13
        assert [k for k, _ in e.maps] == [
            "cell_x", "cell_y", "requests_m30", "requests_m20", "requests_m10",
            "requests_now", "poi_count",
        ]

    def test_wildfire_map_partition(self):
        state, pred, qnet = tiny_fire_setup()
        e = generate_baseline(pred, qnet, state, n_samples=80, seed=0)
        assert len(e.maps) == 3
        assert e.global_influences == []
        assert [k for k, _ in e.maps] == ["fuel", "burning", "av_location"]

    def test_deterministic_given_seed(self):
        state, pred, qnet = tiny_taxi_setup()
        a = generate_baseline(pred, qnet, state, n_samples=60, seed=5)
        b = generate_baseline(pred, qnet, state, n_samples=60, seed=5)
        assert a == b


class TestExplanationSize:
    def make_composed(self, grid: GridSpec) -> ComposedExplanation:
        return ComposedExplanation(
            domain="taxi", grid=grid,
            feature_lists=[("A", Cell(0, 0), [("requests_now", 1.0)])],
            indices=np.zeros((grid.height, grid.width)),
            actions=np.zeros((grid.height, grid.width), dtype=np.int64),
            delta=np.zeros((grid.height, grid.width)),
            advised_action=0,
        )

    def test_composed_sizes(self):
        assert explanation_size(self.make_composed(GridSpec(20, 20))) == 840
        assert explanation_size(self.make_composed(GridSpec(10, 10))) == 240

    def test_baseline_sizes(self):
        taxi = SaliencyExplanation(
            "taxi", GridSpec(20, 20),
            maps=[(k, np.zeros((20, 20))) for k in range(7)],
            global_influences=[(f"g{i}", 0.0) for i in range(13)],
        )
        assert explanation_size(taxi) == 7 * 400 + 13 == 2813
        fire = SaliencyExplanation(
            "wildfire", GridSpec(10, 10),
            maps=[(k, np.zeros((10, 10))) for k in range(3)],
            global_influences=[],
        )
        assert explanation_size(fire) == 300

    def test_budget_padding(self):
        assert feature_list_budget(6, 6) == 40
        assert feature_list_budget(1, 1) == 10


class TestRendering:
    def test_svg_anchors_and_round_trip(self):
        state, pred, qnet = tiny_taxi_setup()
        e = generate_composed(pred, qnet, state, shap_samples=32, seed=0)
        svg, payload = render_heatmap(e)
        assert svg.startswith("<svg") and svg.endswith("</svg>")
        twin = ComposedExplanation.from_json_dict(payload)
        assert twin == e

    def test_zero_index_taxi_cell_is_darkest_red(self):
        e = TestExplanationSize().make_composed(GridSpec(4, 4))
        e.indices = np.zeros((4, 4))
        svg, _ = render_heatmap(e)
        assert "#8b0000" in svg

    def test_lightest_gray_at_zero_delta(self):
        e = TestExplanationSize().make_composed(GridSpec(4, 4))
        svg, _ = render_heatmap(e)
        assert "#e0e0e0" in svg  # 224-level gray at delta 0

    def test_darkest_arrow_at_full_delta(self):
        e = TestExplanationSize().make_composed(GridSpec(4, 4))
        e.delta = np.ones((4, 4))
        svg, _ = render_heatmap(e)
        assert "#000000" in svg

    def test_wildfire_palette_anchors(self):
        assert FIRE_PALETTE.color(0.0) == "#8b0000"
        assert FIRE_PALETTE.color(1.0) == "#006400"
        assert FIRE_PALETTE.color(0.5) == "#ffffff"
        assert TAXI_PALETTE.color(0.0) == "#8b0000"

    def test_palette_json_round_trip(self):
        twin = PaletteConfig.from_json_dict(TAXI_PALETTE.to_json_dict())
        assert twin.stops == TAXI_PALETTE.stops


def test_saliency_json_round_trip():
    state, pred, qnet = tiny_fire_setup()
    e = generate_baseline(pred, qnet, state, n_samples=40, seed=1)
    twin = SaliencyExplanation.from_json_dict(e.to_json_dict())
    assert twin == e


def test_composed_validation():
    grid = GridSpec(3, 3)
    with pytest.raises(ValueError, match="delta"):
        ComposedExplanation(
            "taxi", grid, [], np.zeros((3, 3)), np.zeros((3, 3)),
            np.full((3, 3), 2.0), 0,
        )
    with pytest.raises(ValueError, match="labels"):
        ComposedExplanation(
            "taxi", grid, [("B", Cell(0, 0), [])], np.zeros((3, 3)),
            np.zeros((3, 3)), np.zeros((3, 3)), 0,
        )
