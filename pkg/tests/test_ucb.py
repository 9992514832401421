"""UCB1 arm selection and the reward regressor."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bandit_arena.learners.ucb import (
    RewardRegressor,
    UcbArmStats,
    UcbVariant,
    reward_regressor_score,
    reward_regressor_update,
    ucb1_indices,
    ucb1_select,
)


class TestUcb1:
    def test_unplayed_arm_first(self):
        assert ucb1_select(UcbArmStats([3, 0], [0.9, 0.0])) == 1

    def test_hand_derived_indices(self):
        stats = UcbArmStats([10, 2], [0.5, 0.4])
        idx = ucb1_indices(stats)
        # 0.5 + sqrt(2 ln 12 / 10) and 0.4 + sqrt(2 ln 12 / 2)
        assert round(idx[0], 3) == 1.205
        assert round(idx[1], 3) == 1.976
        assert ucb1_select(stats) == 1

    def test_tie_goes_to_lowest(self):
        assert ucb1_select(UcbArmStats([4, 4], [0.5, 0.5])) == 0

    def test_no_arms(self):
        with pytest.raises(ValueError):
            ucb1_select(UcbArmStats([], []))

    def test_sampling_needs_rng(self):
        with pytest.raises(ValueError):
            ucb1_select(UcbArmStats([1, 1], [0.1, 0.2]), UcbVariant.SAMPLING)

    def test_sampling_distribution(self):
        stats = UcbArmStats([10, 2], [0.5, 0.4])
        idx = ucb1_indices(stats)
        p1 = 1 / (1 + math.exp((idx[0] - idx[1]) / 0.1))
        rng = np.random.default_rng(0)
        draws = [ucb1_select(stats, UcbVariant.SAMPLING, rng) for _ in range(20_000)]
        assert abs(np.mean(draws) - p1) < 0.01

    @given(st.integers(1, 8), st.integers(0, 1000))
    def test_coverage(self, n_arms, seed):
        rng = np.random.default_rng(seed)
        stats = UcbArmStats.empty(n_arms)
        pulled = []
        for _ in range(n_arms):
            arm = ucb1_select(stats, UcbVariant.VANILLA, rng)
            pulled.append(arm)
            stats.update(arm, float(rng.uniform()))
        assert sorted(pulled) == list(range(n_arms))

    @given(st.lists(st.tuples(st.integers(0, 2), st.floats(0, 1)), max_size=100))
    def test_stats_bookkeeping(self, pulls):
        stats = UcbArmStats.empty(3)
        for arm, r in pulls:
            stats.update(arm, r)
        assert stats.total == len(pulls)
        for arm in range(3):
            rs = [r for a, r in pulls if a == arm]
            if rs:
                assert stats.means[arm] == pytest.approx(sum(rs) / len(rs), abs=1e-12)
                assert -1e-12 <= stats.means[arm] <= 1 + 1e-12


class TestRegressor:
    def test_zero_init(self):
        rr = RewardRegressor.zeros(3)
        assert np.all(reward_regressor_score(rr, np.ones((4, 3))) == 0)

    def test_clipping(self):
        rr = RewardRegressor(np.array([1.7]))
        assert reward_regressor_score(rr, np.array([1.0])) == 1.0
        assert reward_regressor_score(rr, np.array([-1.0])) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            reward_regressor_update(RewardRegressor.zeros(3), np.ones(2), 0.5)

    def test_converges_on_linear_rewards(self):
        rng = np.random.default_rng(0)
        u_star = np.array([0.2, -0.1, 0.3, 0.5])
        rr = RewardRegressor.zeros(4, lr=0.05)
        for _ in range(20_000):
            phi = np.append(rng.uniform(-1, 1, size=3), 1.0)
            reward_regressor_update(rr, phi, float(phi @ u_star))
        test = np.column_stack([rng.uniform(-1, 1, size=(500, 3)), np.ones(500)])
        mse = np.mean((rr.predict_raw(test) - test @ u_star) ** 2)
        assert mse < 1e-3
        assert rr.count == 20_000
