"""Online metrics over round logs, held-out checkpoints and online-to-batch conversion."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bleu import corpus_bleu, smoothed_sentence_bleu
from .data import Instance
from .environment import RoundLog, SequencePlan
from .learners.agents import Learner, OracleLearner, load_checkpoint

ROUND_COLUMNS = ("round", "reward", "oracle_reward", "running_regret", "is_heldout")
CHECKPOINT_COLUMNS = ("checkpoint", "start_round", "end_round", "corpus_bleu", "avg_sentence_bleu")


class EvaluationError(ValueError):
    pass


def cumulative_reward(logs: Sequence[RoundLog]) -> float:
    total = 0.0
    for log in logs:
        total += log.reward
    return total


@dataclass
class RegretSeries:
    rounds: np.ndarray
    instantaneous: np.ndarray
    running: np.ndarray

    @property
    def has_negative(self) -> bool:
        """True when some submission beat the oracle (possible only outside the candidate set)."""
        return bool((self.instantaneous < 0).any())

    def window_mean(self, start: int, stop: int) -> float:
        return float(self.instantaneous[start:stop].mean())


def regret_series(logs: Sequence[RoundLog]) -> RegretSeries:
    if any(log.oracle_reward is None for log in logs):
        raise EvaluationError("regret needs oracle rewards; client-side logs do not carry them")
    inst = np.array([log.oracle_reward - log.reward for log in logs], dtype=np.float64)
    running = np.empty_like(inst)
    acc = 0.0
    for k, r in enumerate(inst):
        acc += r
        running[k] = acc / (k + 1)
    return RegretSeries(np.array([log.round for log in logs], dtype=np.int64), inst, running)


@dataclass
class Checkpoint:
    index: int
    start_round: int
    end_round: int
    corpus_bleu: float
    avg_sentence_bleu: float


def checkpoint_eval(logs: Sequence[RoundLog], plan: SequencePlan,
                    references: Mapping[str, Sequence[str]]) -> list[Checkpoint]:
    """One checkpoint per held-out block that the logs have reached.

    Blocks lying entirely beyond the last logged round are skipped; a block
    that the logs only partly cover is an error.
    """
    by_round = {log.round: log for log in logs}
    last = max(by_round) if by_round else -1
    out = []
    for index, (start, length) in enumerate(plan.blocks):
        if start > last:
            break
        block = []
        for k in range(start, start + length):
            if k not in by_round:
                raise EvaluationError(f"held-out block {index} is missing round {k}")
            block.append(by_round[k])
        pairs = [(log.tokens, references[log.instance_id]) for log in block]
        rewards = [log.reward for log in block]
        out.append(Checkpoint(index, start, start + length, corpus_bleu(pairs),
                              math.fsum(rewards) / len(rewards)))
    return out


class BatchStrategy(str, enum.Enum):
    FINAL = "FINAL"
    BEST_HELDOUT = "BEST_HELDOUT"


def online_to_batch(checkpoint_paths: Sequence, strategy: BatchStrategy = BatchStrategy.FINAL):
    """Pick one model out of an online run's checkpoints.

    Checkpoints are ordered by round. BEST_HELDOUT compares the average
    sentence-BLEU of the held-out block that most recently preceded each
    checkpoint (stored in its metadata); later checkpoints win ties.
    Returns ``(path, record)``.
    """
    if not checkpoint_paths:
        raise EvaluationError("online_to_batch needs at least one checkpoint")
    loaded = sorted(((load_checkpoint(p), Path(p)) for p in checkpoint_paths),
                    key=lambda rp: rp[0]["round"])
    if BatchStrategy(strategy) is BatchStrategy.FINAL:
        record, path = loaded[-1]
        return path, record
    best = None
    best_score = -math.inf
    for record, path in loaded:
        held = record.get("metadata", {}).get("heldout")
        score = -math.inf if held is None else held["avg_sentence_bleu"]
        if best is None or score >= best_score:
            best, best_score = (path, record), score
    return best


def exploit_eval(model, test: Sequence[Instance]) -> tuple[float, float]:
    """Greedy (argmax) translation of every test instance; no updates.

    ``model`` is a weight vector or a learner exposing ``greedy_index``.
    Returns ``(corpus_bleu, avg_sentence_bleu)``.
    """
    if not test:
        raise EvaluationError("empty test set")
    pairs = []
    for inst in test:
        if isinstance(model, OracleLearner):
            hyp = inst.oracle_tokens
        elif isinstance(model, Learner):
            hyp = inst.candidates[model.greedy_index(inst.feature_matrix())].tokens
        else:
            w = np.asarray(model, dtype=np.float64)
            hyp = inst.candidates[int(np.argmax(inst.feature_matrix() @ w))].tokens
        pairs.append((hyp, inst.reference))
    sent = [smoothed_sentence_bleu(h, r) for h, r in pairs]
    return corpus_bleu(pairs), math.fsum(sent) / len(sent)


# -- CSV reports ------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_rounds_csv(path, logs: Sequence[RoundLog]) -> None:
    series = regret_series(logs)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ROUND_COLUMNS)
        for log, running in zip(logs, series.running):
            w.writerow([log.round, _fmt(log.reward), _fmt(log.oracle_reward), _fmt(running),
                        int(log.held_out)])


def write_checkpoints_csv(path, checkpoints: Sequence[Checkpoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CHECKPOINT_COLUMNS)
        for c in checkpoints:
            w.writerow([c.index, c.start_round, c.end_round, _fmt(c.corpus_bleu), _fmt(c.avg_sentence_bleu)])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
