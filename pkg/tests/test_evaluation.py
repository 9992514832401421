"""Cumulative reward, regret, held-out checkpoints and online-to-batch selection."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bandit_arena.bleu import smoothed_sentence_bleu
from bandit_arena.environment import Environment, RoundLog, SequencePlan
from bandit_arena.evaluation import (
    BatchStrategy,
    EvaluationError,
    checkpoint_eval,
    cumulative_reward,
    exploit_eval,
    online_to_batch,
    read_csv,
    regret_series,
    write_checkpoints_csv,
    write_rounds_csv,
)
from bandit_arena.learners.agents import CandidateTable, LearnerConfig, make_learner, save_checkpoint


def logs_from(rewards, oracle=None):
    oracle = oracle or [1.0] * len(rewards)
    return [RoundLog(k, f"i{k}", ["x"], r, o, False) for k, (r, o) in enumerate(zip(rewards, oracle))]


class TestOnlineMetrics:
    def test_cumulative(self):
        assert cumulative_reward(logs_from([0.5, 0.7, 0.3])) == pytest.approx(1.5)
        assert cumulative_reward([]) == 0.0

    def test_regret(self):
        s = regret_series(logs_from([0.4, 0.6], [1.0, 1.0]))
        assert s.running[-1] == pytest.approx(0.5)

    def test_oracle_logs_zero_regret(self):
        s = regret_series(logs_from([0.3, 0.8], [0.3, 0.8]))
        assert np.all(s.running == 0)

    def test_missing_oracle(self):
        with pytest.raises(EvaluationError):
            regret_series([RoundLog(0, "i", [], 0.5, None, False)])

    def test_negative_regret_is_flagged(self):
        assert regret_series(logs_from([0.9], [0.5])).has_negative

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=200))
    def test_reward_plus_regret_is_oracle(self, pairs):
        logs = logs_from([r for r, _ in pairs], [o for _, o in pairs])
        s = regret_series(logs)
        assert np.all(s.instantaneous >= -1) and np.all(s.instantaneous <= 1)
        for k in range(len(logs)):
            lhs = math.fsum(e.reward for e in logs[:k + 1]) + math.fsum(s.instantaneous[:k + 1])
            assert lhs == pytest.approx(math.fsum(e.oracle_reward for e in logs[:k + 1]), abs=1e-9)

    def test_replayed_equals_live(self, small_world, tmp_path):
        from bandit_arena.environment import RoundLogWriter, read_round_logs

        train, held, plan = small_world
        writer = RoundLogWriter(tmp_path / "l.jsonl", fsync=False)
        env = Environment(train + held, plan, sink=lambda s, e: writer.append(e))
        learner = make_learner(LearnerConfig(kind="EL_CV"), CandidateTable(train + held))
        s = env.new_session()
        live = []
        for _ in range(plan.total):
            m = env.next_source(s)
            t = learner.propose(m)
            live.append(env.submit_translation(s, m.instance_id, t))
            learner.update(m, t, live[-1])
        writer.close()
        replayed = read_round_logs(tmp_path / "l.jsonl")
        assert abs(cumulative_reward(replayed) - s.cumulative_reward) < 1e-9
        np.testing.assert_allclose(regret_series(replayed).running, regret_series(s.round_logs).running, atol=1e-9)


class TestCheckpointEval:
    def _perfect_run(self, small_world):
        train, held, plan = small_world
        env = Environment(train + held, plan)
        s = env.new_session()
        for _ in range(plan.total):
            m = env.next_source(s)
            env.submit_translation(s, m.instance_id, env.instances[m.instance_id].reference)
        refs = {i.id: i.reference for i in train + held}
        return s.round_logs, plan, refs

    def test_perfect_block(self, small_world):
        logs, plan, refs = self._perfect_run(small_world)
        cks = checkpoint_eval(logs, plan, refs)
        assert len(cks) == len(plan.blocks) == 3
        assert all(c.corpus_bleu == 1.0 and c.avg_sentence_bleu == 1.0 for c in cks)

    def test_four_blocks_four_checkpoints(self):
        ids = ("h0",) + tuple(f"t{i}" for i in range(3)) + ("h0",) + ("t3",) + ("h0",) + ("t4",) + ("h0",)
        plan = SequencePlan(ids, ((0, 1), (4, 1), (6, 1), (8, 1)))
        logs = [RoundLog(k, iid, ["a", "b", "c", "d"], 1.0, 1.0, k in (0, 4, 6, 8)) for k, iid in enumerate(ids)]
        refs = {i: ["a", "b", "c", "d"] for i in set(ids)}
        assert len(checkpoint_eval(logs, plan, refs)) == 4

    def test_metric_discrepancy(self):
        # every sentence misses all 4-grams: smoothed sentence BLEU > 0, corpus BLEU = 0
        plan = SequencePlan(("h0", "h1"), ((0, 2),))
        refs = {"h0": list("abce"), "h1": list("wxyq")}
        hyps = [list("abcd"), list("wxyz")]
        logs = [RoundLog(k, f"h{k}", hyps[k], smoothed_sentence_bleu(hyps[k], refs[f"h{k}"]), 1.0, True)
                for k in range(2)]
        (ck,) = checkpoint_eval(logs, plan, refs)
        assert ck.corpus_bleu == 0.0
        assert ck.avg_sentence_bleu > 0.0

    def test_partial_block(self):
        plan = SequencePlan(("h0", "h1", "t0"), ((0, 2),))
        logs = [RoundLog(0, "h0", ["a"], 1.0, 1.0, True)]
        with pytest.raises(EvaluationError):
            checkpoint_eval(logs, plan, {"h0": ["a"], "h1": ["b"]})

    def test_blocks_not_yet_reached_are_skipped(self, small_world):
        logs, plan, refs = self._perfect_run(small_world)
        first_end = plan.blocks[0][1]
        assert len(checkpoint_eval(logs[:first_end + 3], plan, refs)) == 1

    def test_independent_of_training_rounds(self, small_world):
        logs, plan, refs = self._perfect_run(small_world)
        mask = plan.heldout_mask()
        changed = [e if mask[e.round] else RoundLog(e.round, e.instance_id, [], 0.0, e.oracle_reward, False)
                   for e in logs]
        shuffled = list(reversed(changed))
        a = checkpoint_eval(logs, plan, refs)
        b = checkpoint_eval(shuffled, plan, refs)
        assert [(c.corpus_bleu, c.avg_sentence_bleu) for c in a] == [(c.corpus_bleu, c.avg_sentence_bleu) for c in b]


class TestOnlineToBatch:
    def _checkpoints(self, tmp_path, world, scores):
        every, _, table = world
        learner = make_learner(LearnerConfig(kind="STATIC"), table)
        paths = []
        for k, score in enumerate(scores):
            learner.w = np.full(table.dim, float(k))
            p = tmp_path / f"round-{k:08d}.json"
            held = None if score is None else {"avg_sentence_bleu": score}
            save_checkpoint(p, learner, k * 10, {"heldout": held}, fsync=False)
            paths.append(p)
        return paths

    @pytest.fixture
    def world(self, small_world):
        train, held, plan = small_world
        return train + held, plan, CandidateTable(train + held)

    def test_empty(self):
        with pytest.raises(EvaluationError):
            online_to_batch([])

    def test_single(self, tmp_path, world):
        paths = self._checkpoints(tmp_path, world, [0.3])
        assert online_to_batch(paths, "FINAL")[0] == online_to_batch(paths, "BEST_HELDOUT")[0] == paths[0]

    def test_monotone(self, tmp_path, world):
        paths = self._checkpoints(tmp_path, world, [0.1, 0.2, 0.3])
        assert online_to_batch(paths, BatchStrategy.FINAL)[0] == online_to_batch(paths, BatchStrategy.BEST_HELDOUT)[0]

    def test_non_monotone(self, tmp_path, world):
        paths = self._checkpoints(tmp_path, world, [None, 0.5, 0.2])
        assert online_to_batch(paths, "FINAL")[0] == paths[2]
        assert online_to_batch(paths, "BEST_HELDOUT")[0] == paths[1]

    def test_ties_go_to_later(self, tmp_path, world):
        paths = self._checkpoints(tmp_path, world, [0.4, 0.4, 0.1])
        assert online_to_batch(list(reversed(paths)), "BEST_HELDOUT")[0] == paths[1]


class TestExploitEval:
    def test_oracle(self, small_world):
        train, held, _ = small_world
        oracle = make_learner(LearnerConfig(kind="ORACLE"), CandidateTable(train), instances=train)
        _, avg = exploit_eval(oracle, train)
        assert avg == pytest.approx(np.mean([i.oracle_reward for i in train]), abs=1e-12)

    def test_pure(self, small_world):
        train, _, _ = small_world
        w = np.random.default_rng(0).normal(size=train[0].dim)
        assert exploit_eval(w, train) == exploit_eval(w, train)

    def test_learner_and_weights_agree(self, small_world):
        train, _, _ = small_world
        table = CandidateTable(train)
        w = np.random.default_rng(1).normal(size=table.dim)
        learner = make_learner(LearnerConfig(kind="EL_CV"), table, w)
        before = learner.w.copy()
        assert exploit_eval(learner, train) == exploit_eval(w, train)
        np.testing.assert_array_equal(learner.w, before)

    def test_empty(self):
        with pytest.raises(EvaluationError):
            exploit_eval(np.zeros(2), [])


class TestCsv:
    def test_round_trip(self, tmp_path):
        logs = logs_from([0.1, 0.2], [0.5, 1.0])
        write_rounds_csv(tmp_path / "r.csv", logs)
        rows = read_csv(tmp_path / "r.csv")
        assert list(rows[0]) == ["round", "reward", "oracle_reward", "running_regret", "is_heldout"]
        assert float(rows[1]["running_regret"]) == pytest.approx(0.6)
        assert float(rows[0]["reward"]) == 0.1  # repr round-trips exactly

    def test_checkpoint_columns(self, tmp_path):
        from bandit_arena.evaluation import Checkpoint

        write_checkpoints_csv(tmp_path / "c.csv", [Checkpoint(0, 0, 5, 0.25, 0.5)])
        assert read_csv(tmp_path / "c.csv") == [
            {"checkpoint": "0", "start_round": "0", "end_round": "5", "corpus_bleu": "0.25", "avg_sentence_bleu": "0.5"}]
