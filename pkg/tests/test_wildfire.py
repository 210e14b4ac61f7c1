import numpy as np
import pytest

from gridadvice.grid import Cell, GridSpec
from gridadvice.wildfire import (
    ACTIONS,
    FireParams,
    ForestState,
    InvalidActionError,
    fire_risk_labels,
    fire_step,
    ignition_prob,
    neighborhood_fire_ratio,
    new_fire_episode,
    wildfire_step,
)

PARAMS = FireParams()


def forest(w=5, h=5, fuel=1.0, av=Cell(0, 0)):
    grid = GridSpec(w, h)
    return ForestState(
        grid=grid,
        fuel=np.full((h, w), fuel, dtype=np.float64),
        burning=np.zeros((h, w), dtype=bool),
        av=av,
        step=0,
    )


class TestIgnitionProb:
    def test_zero_neighbors(self):
        assert ignition_prob(0, 20.0) == 0.0

    def test_boundary(self):
        assert ignition_prob(20, 20.0) == 1.0
        assert ignition_prob(25, 20.0) == 1.0

    def test_quarter(self):
        assert ignition_prob(5, 20.0) == 0.25

    def test_monte_carlo_oracle(self):
        # P(b_g > v * alpha) for v ~ U(0,1), estimated directly from v draws
        rng = np.random.default_rng(0)
        v = rng.random(100_000)
        for b_g in (1, 5, 10, 19):
            p_hat = np.mean(b_g > v * 20.0)
            p = ignition_prob(b_g, 20.0)
            sigma = np.sqrt(p * (1 - p) / v.size)
            assert abs(p_hat - p) <= 3 * sigma


class TestFireStep:
    def test_burning_cell_loses_beta(self):
        state = forest()
        state.burning[2, 2] = True
        nxt = fire_step(state, False, PARAMS, np.random.default_rng(0))
        assert nxt.fuel[2, 2] == pytest.approx(0.3)
        assert nxt.burning[2, 2]

    def test_burning_stops_at_zero_fuel(self):
        state = forest(fuel=0.5)
        state.burning[2, 2] = True
        nxt = fire_step(state, False, PARAMS, np.random.default_rng(0))
        assert nxt.fuel[2, 2] == 0.0
        assert not nxt.burning[2, 2]

    def test_isolated_cell_never_ignites(self):
        state = forest()
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            nxt = fire_step(state, False, PARAMS, rng)
            assert not nxt.burning.any()

    def test_extinguish_clears_av_cell(self):
        state = forest(av=Cell(2, 2))
        state.burning[2, 2] = True
        nxt = fire_step(state, True, PARAMS, np.random.default_rng(0))
        assert not nxt.burning[2, 2]

    def test_extinguish_on_clear_cell_is_noop(self):
        state = forest(av=Cell(0, 0))
        state.burning[3, 3] = True
        a = fire_step(state, True, PARAMS, np.random.default_rng(5))
        b = fire_step(state, False, PARAMS, np.random.default_rng(5))
        np.testing.assert_array_equal(a.burning, b.burning)
        np.testing.assert_array_equal(a.fuel, b.fuel)

    def test_ignition_counts_pre_update_neighbors(self):
        # A cell whose only burning neighbor exhausts its fuel this step can
        # still ignite: b_g is counted before the update.
        state = forest(fuel=0.5)
        state.burning[2, 2] = True
        rng = np.random.default_rng(2)
        ignitions = 0
        for _ in range(4000):
            nxt = fire_step(state, False, PARAMS, rng)
            ignitions += int(nxt.burning[2, 3])
        assert ignitions > 0


class TestFireRatio:
    def test_no_fire(self):
        assert neighborhood_fire_ratio(forest(), Cell(2, 2)) == 0.0

    def test_all_burning_interior(self):
        state = forest()
        state.burning[:] = True
        assert neighborhood_fire_ratio(state, Cell(2, 2)) == 1.0

    def test_three_of_nine(self):
        state = forest()
        state.burning[1, 1] = state.burning[1, 2] = state.burning[3, 3] = True
        assert neighborhood_fire_ratio(state, Cell(2, 2)) == pytest.approx(1 / 3)

    def test_corner_window_is_four(self):
        state = forest()
        state.burning[0, 0] = True
        assert neighborhood_fire_ratio(state, Cell(0, 0)) == pytest.approx(1 / 4)


class TestWildfireStep:
    def test_move_costs_one(self):
        state = forest(av=Cell(2, 2))
        nxt, reward = wildfire_step(state, "east", PARAMS, np.random.default_rng(0))
        assert reward == -1.0
        assert nxt.av == Cell(3, 2)
        assert nxt.step == 1

    def test_stay_is_free(self):
        _, reward = wildfire_step(forest(), "stay", PARAMS, np.random.default_rng(0))
        assert reward == 0.0

    def test_extinguish_low_ratio_penalty(self):
        _, reward = wildfire_step(forest(av=Cell(2, 2)), "extinguish", PARAMS,
                                  np.random.default_rng(0))
        assert reward == -2.5

    def test_extinguish_reward_scales_with_ratio(self):
        state = forest(av=Cell(2, 2))
        state.burning[1, 1] = state.burning[1, 2] = state.burning[1, 3] = True
        state.burning[2, 1] = state.burning[2, 2] = state.burning[2, 3] = True
        ratio = neighborhood_fire_ratio(state, Cell(2, 2))
        assert ratio == pytest.approx(6 / 9)
        _, reward = wildfire_step(state, "extinguish", PARAMS, np.random.default_rng(0))
        assert reward == pytest.approx(PARAMS.extinguish_gain * ratio)

    def test_unknown_action_rejected(self):
        with pytest.raises(InvalidActionError):
            wildfire_step(forest(), "dig", PARAMS, np.random.default_rng(0))

    def test_north_decreases_y(self):
        state = forest(av=Cell(2, 2))
        nxt, _ = wildfire_step(state, "north", PARAMS, np.random.default_rng(0))
        assert nxt.av == Cell(2, 1)


class TestRiskLabels:
    def test_burning_with_fuel_persists(self):
        state = forest(fuel=0.9)
        state.burning[1, 1] = True
        mu = fire_risk_labels(state, PARAMS)
        assert mu[1, 1] == 1.0

    def test_exhausted_cell_is_zero(self):
        state = forest(fuel=0.0)
        assert (fire_risk_labels(state, PARAMS) == 0).all()

    def test_ten_burning_neighbors_give_half(self):
        state = forest(w=7, h=7)
        target = Cell(3, 3)
        placed = 0
        for y in range(1, 6):
            for x in range(1, 6):
                if (x, y) != (target.x, target.y) and placed < 10:
                    state.burning[y, x] = True
                    placed += 1
        assert placed == 10
        mu = fire_risk_labels(state, PARAMS)
        assert mu[target.y, target.x] == pytest.approx(0.5)

    def test_burning_below_beta_goes_out(self):
        state = forest(fuel=0.5)
        state.burning[2, 2] = True
        mu = fire_risk_labels(state, PARAMS)
        assert mu[2, 2] == 0.0


class TestInvariants:
    def test_total_fuel_never_increases(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            state = new_fire_episode(GridSpec(6, 6), PARAMS, rng)
            total = state.fuel.sum()
            for _ in range(30):
                action = ACTIONS[rng.integers(len(ACTIONS))]
                state, _ = wildfire_step(state, action, PARAMS, rng)
                assert state.fuel.sum() <= total + 1e-12
                total = state.fuel.sum()

    def test_burning_implies_fuel(self):
        rng = np.random.default_rng(10)
        state = new_fire_episode(GridSpec(8, 8), PARAMS, rng)
        for _ in range(50):
            state, _ = wildfire_step(state, "stay", PARAMS, rng)
            assert (state.fuel[state.burning] > 0).all()


def test_forest_state_json_round_trip():
    rng = np.random.default_rng(3)
    state = new_fire_episode(GridSpec(5, 4), PARAMS, rng)
    twin = ForestState.from_json_dict(state.to_json_dict())
    assert twin.grid == state.grid and twin.av == state.av and twin.step == state.step
    np.testing.assert_allclose(twin.fuel, state.fuel)
    np.testing.assert_array_equal(twin.burning, state.burning)


def test_fire_params_validation():
    with pytest.raises(ValueError):
        FireParams(alpha=0.0)
    with pytest.raises(ValueError):
        FireParams(beta=1.5)
    with pytest.raises(ValueError):
        FireParams(high_ratio_threshold=1.0)
