"""Ascent optimizers and the temperature / learning-rate annealing schedule."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bandit_arena.learners.optim import (
    AnnealSchedule,
    OptimizerDiverged,
    OptimizerKind,
    OptimizerState,
    anneal_tick,
    optimizer_step,
)
from bandit_arena.learners.policy import softmax_with_temperature


def opt(kind, dim=1, **kw):
    return OptimizerState(OptimizerKind(kind), dim, **kw)


class TestSteps:
    def test_sgd(self):
        w = optimizer_step(opt("SGD", 2, lr=0.1), np.zeros(2), np.array([1.0, -2.0]))
        np.testing.assert_allclose(w, [0.1, -0.2])

    @pytest.mark.parametrize("g", [0.3, -7.0, 1e-3])
    def test_adam_first_step_is_sign(self, g):
        o = opt("ADAM", lr=1e-3)
        w = optimizer_step(o, np.zeros(1), np.array([g]))
        assert w[0] == pytest.approx(math.copysign(1e-3, g), rel=1e-4)
        assert o.t == 1

    def test_adam_by_hand_two_steps(self):
        o = opt("ADAM", lr=0.1)
        w = optimizer_step(o, np.zeros(1), np.array([1.0]))
        w = optimizer_step(o, w, np.array([0.5]))
        m = 0.9 * 0.1 + 0.1 * 0.5
        v = 0.999 * 0.001 + 0.001 * 0.25
        step2 = 0.1 * (m / (1 - 0.81)) / (math.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
        assert w[0] == pytest.approx(0.1 * 1 / (1 + 1e-8) + step2, rel=1e-12)

    def test_adadelta_zero_gradient(self):
        w = optimizer_step(opt("ADADELTA", 3, lr=1.0), np.array([1.0, 2.0, 3.0]), np.zeros(3))
        np.testing.assert_array_equal(w, [1.0, 2.0, 3.0])

    def test_adadelta_first_step_by_hand(self):
        o = opt("ADADELTA", lr=1.0)
        w = optimizer_step(o, np.zeros(1), np.array([2.0]))
        acc = 0.05 * 4
        delta = math.sqrt(1e-6) / math.sqrt(acc + 1e-6) * 2
        assert w[0] == pytest.approx(delta, rel=1e-12)
        assert o.acc_delta[0] == pytest.approx(0.05 * delta * delta, rel=1e-12)

    @pytest.mark.parametrize("kind", list(OptimizerKind))
    def test_step_counter(self, kind):
        o = opt(kind, 2, lr=0.1)
        w = np.zeros(2)
        for k in range(5):
            w = optimizer_step(o, w, np.ones(2))
            assert o.t == k + 1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            optimizer_step(opt("SGD", 2), np.zeros(2), np.zeros(3))

    def test_divergence(self):
        with pytest.raises(OptimizerDiverged):
            optimizer_step(opt("SGD", 1, lr=1.0), np.zeros(1), np.array([np.inf]))

    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=6), st.integers(0, 2**31))
    def test_adam_quadratic(self, target, seed):
        w_star = np.asarray(target)
        o = opt("ADAM", len(w_star), lr=0.05)
        w = np.zeros_like(w_star)
        for _ in range(200):
            w = optimizer_step(o, w, -2 * (w - w_star))  # ascent on -||w - w*||^2
        assert np.linalg.norm(w - w_star) < 0.1

    @pytest.mark.parametrize("kind", list(OptimizerKind))
    def test_state_round_trip(self, kind):
        o = opt(kind, 2, lr=0.1)
        optimizer_step(o, np.zeros(2), np.array([0.5, -0.5]))
        back = OptimizerState.from_dict(o.to_dict())
        w1 = optimizer_step(o, np.ones(2), np.array([0.1, 0.2]))
        w2 = optimizer_step(back, np.ones(2), np.array([0.1, 0.2]))
        np.testing.assert_array_equal(w1, w2)


class TestAnneal:
    def test_before_start(self):
        s = AnnealSchedule(k_start=5)
        o = opt("SGD", lr=0.5)
        for k in range(1, 6):
            assert anneal_tick(s, o, k) == (1.0, 0.5)

    def test_one_past_start(self):
        assert AnnealSchedule(5).temperature_at(6) == 0.99

    def test_ten_past_start(self):
        assert AnnealSchedule(5).temperature_at(15) == pytest.approx(0.99 ** 10, abs=1e-15)
        assert AnnealSchedule(5).temperature_at(15) == pytest.approx(0.90438, abs=1e-5)

    def test_trace_matches_closed_form(self):
        s = AnnealSchedule(k_start=3)
        o = opt("SGD", lr=0.2)
        gamma = 0.2
        for k in range(1, 40):
            T, lr = anneal_tick(s, o, k)
            T_closed = 0.99 ** max(k - 3, 0)
            gamma = gamma * T_closed
            assert T == T_closed
            assert lr == gamma
        # closed form of the product: gamma_K = gamma_0 * 0.99 ** sum_{j=1}^{K-3} j
        n = 39 - 3
        assert lr == pytest.approx(0.2 * 0.99 ** (n * (n + 1) / 2), rel=1e-12)

    def test_repeated_tick_is_idempotent(self):
        s = AnnealSchedule(0)
        o = opt("SGD", lr=1.0)
        first = anneal_tick(s, o, 3)
        assert anneal_tick(s, o, 3) == first

    def test_backwards_tick(self):
        s = AnnealSchedule(0)
        o = opt("SGD", lr=1.0)
        anneal_tick(s, o, 3)
        with pytest.raises(ValueError):
            anneal_tick(s, o, 2)

    def test_entropy_strictly_decreases_after_start(self):
        scores = np.array([0.3, -1.2, 0.9, 0.0])
        s = AnnealSchedule(k_start=10)
        entropies = [softmax_with_temperature(scores, s.temperature_at(k)).entropy() for k in range(10, 200)]
        assert all(b < a for a, b in zip(entropies, entropies[1:]))
