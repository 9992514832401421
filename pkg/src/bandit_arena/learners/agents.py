"""Bandit learners driven by Algorithm-1 style ``propose``/``update`` calls.

A learner sees only what a participant sees: the source message, its own
candidate table (k-best lists with features, no references) and the scalar
reward for the translation it proposed.
"""
from __future__ import annotations

import enum
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from ..data import Instance
from ..environment import SourceMessage
from .optim import AnnealSchedule, OptimizerKind, OptimizerState, anneal_tick, optimizer_step
from .policy import (
    ControlVariateState,
    candidate_scores,
    cv_adjust,
    el_gradient,
    softmax_with_temperature,
    szo_gradient,
    szo_propose,
)
from .ucb import RewardRegressor, UcbArmStats, UcbVariant, ucb1_select

CHECKPOINT_VERSION = 1


class LearnerKind(str, enum.Enum):
    STATIC = "STATIC"
    ORACLE = "ORACLE"
    EL_CV = "EL_CV"
    SZO_CV = "SZO_CV"
    UCB1_ENSEMBLE = "UCB1_ENSEMBLE"


class LearnerError(RuntimeError):
    pass


@dataclass(frozen=True)
class CandidateSet:
    features: np.ndarray
    tokens: tuple


class CandidateTable(Mapping):
    """Instance id -> candidate set: the learner's stand-in for a decoder's k-best lists."""

    def __init__(self, instances: Sequence[Instance] = (), sets: Optional[dict] = None):
        self._sets = dict(sets or {})
        for inst in instances:
            self._sets[inst.id] = CandidateSet(
                inst.feature_matrix(), tuple(tuple(c.tokens) for c in inst.candidates))

    @classmethod
    def from_files(cls, *paths) -> "CandidateTable":
        """Load dataset-format records; a ``reference`` field, if present, is ignored."""
        sets = {}
        for path in paths:
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    sets[str(rec["id"])] = CandidateSet(
                        np.array([c["features"] for c in rec["candidates"]], dtype=np.float64),
                        tuple(tuple(c["tokens"].split()) for c in rec["candidates"]))
        return cls(sets=sets)

    def __getitem__(self, key):
        return self._sets[key]

    def __iter__(self):
        return iter(self._sets)

    def __len__(self):
        return len(self._sets)

    @property
    def dim(self) -> int:
        return next(iter(self._sets.values())).features.shape[1]


class Learner:
    kind: LearnerKind

    def propose(self, msg: SourceMessage) -> list[str]:
        raise NotImplementedError

    def update(self, msg: SourceMessage, tokens: Sequence[str], reward: float) -> None:
        raise NotImplementedError

    def greedy_index(self, features: np.ndarray) -> int:
        raise NotImplementedError

    def state_dict(self) -> dict:
        return {"kind": self.kind.value}

    def load_state_dict(self, state: dict) -> None:
        pass


class CandidateLearner(Learner):
    """Shared propose/update bookkeeping for learners that pick from a candidate set."""

    def __init__(self, table: Mapping[str, CandidateSet], seed: int = 0):
        self.table = table
        self.rng = np.random.default_rng(seed)
        self.rounds = 0
        self._pending = None

    def choose(self, cands: CandidateSet) -> tuple[int, object]:
        raise NotImplementedError

    def learn(self, cands: CandidateSet, index: int, reward: float, extra) -> None:
        pass

    def propose(self, msg):
        cands = self.table[msg.instance_id]
        index, extra = self.choose(cands)
        self._pending = (msg.round, msg.instance_id, index, extra)
        return list(cands.tokens[index])

    def update(self, msg, tokens, reward):
        if self._pending is None or self._pending[:2] != (msg.round, msg.instance_id):
            raise LearnerError(f"update for round {msg.round} without a matching propose")
        _, instance_id, index, extra = self._pending
        self._pending = None
        self.learn(self.table[instance_id], index, float(reward), extra)
        self.rounds += 1

    def state_dict(self):
        d = super().state_dict()
        d["rounds"] = self.rounds
        d["rng"] = self.rng.bit_generator.state
        return d

    def load_state_dict(self, state):
        self.rounds = int(state["rounds"])
        self.rng.bit_generator.state = state["rng"]


class LinearLearner(CandidateLearner):
    def __init__(self, table, weights, seed=0):
        super().__init__(table, seed)
        self.w = np.array(weights, dtype=np.float64)

    @property
    def weights(self) -> np.ndarray:
        return self.w

    def greedy_index(self, features):
        return int(np.argmax(candidate_scores(self.w, features)))

    def state_dict(self):
        d = super().state_dict()
        d["weights"] = self.w.tolist()
        return d

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.w = np.asarray(state["weights"], dtype=np.float64)


class StaticLearner(LinearLearner):
    """Seed model that never updates."""

    kind = LearnerKind.STATIC

    def choose(self, cands):
        return self.greedy_index(cands.features), None


class OracleLearner(Learner):
    """Proposes the oracle translation. Needs references, so simulation only."""

    kind = LearnerKind.ORACLE

    def __init__(self, instances: Sequence[Instance]):
        self.instances = {inst.id: inst for inst in instances}
        self.rounds = 0

    def propose(self, msg):
        return self.instances[msg.instance_id].oracle_tokens

    def update(self, msg, tokens, reward):
        self.rounds += 1

    def greedy_index(self, features):
        raise LearnerError("the oracle has no weights; evaluate it per instance")

    def state_dict(self):
        return {"kind": self.kind.value, "rounds": self.rounds}

    def load_state_dict(self, state):
        self.rounds = int(state["rounds"])


class ELLearner(LinearLearner):
    """Expected-reward policy gradient with running-mean control variate."""

    kind = LearnerKind.EL_CV

    def __init__(self, table, weights, optimizer: OptimizerState, use_cv: bool = True,
                 anneal: Optional[AnnealSchedule] = None, seed: int = 0):
        super().__init__(table, weights, seed)
        self.opt = optimizer
        self.cv = ControlVariateState() if use_cv else None
        self.anneal = anneal

    def choose(self, cands):
        temperature = 1.0
        if self.anneal is not None:
            temperature, _ = anneal_tick(self.anneal, self.opt, self.rounds + 1)
        p = softmax_with_temperature(candidate_scores(self.w, cands.features), temperature).probabilities
        return int(self.rng.choice(len(p), p=p)), temperature

    def learn(self, cands, index, reward, temperature):
        adjusted = reward if self.cv is None else cv_adjust(self.cv, reward)
        g = el_gradient(self.w, cands.features, index, adjusted, temperature)
        self.w = optimizer_step(self.opt, self.w, g)

    def state_dict(self):
        d = super().state_dict()
        d["optimizer"] = self.opt.to_dict()
        d["cv"] = None if self.cv is None else self.cv.to_dict()
        d["anneal"] = None if self.anneal is None else self.anneal.to_dict()
        return d

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.opt = OptimizerState.from_dict(state["optimizer"])
        self.cv = None if state["cv"] is None else ControlVariateState.from_dict(state["cv"])
        self.anneal = None if state["anneal"] is None else AnnealSchedule.from_dict(state["anneal"])


class SZOLearner(LinearLearner):
    """One-point zeroth-order learner: Gaussian-perturbed weights, Viterbi proposal."""

    kind = LearnerKind.SZO_CV

    def __init__(self, table, weights, optimizer: OptimizerState, sigma: float = 1.0,
                 use_cv: bool = True, seed: int = 0):
        super().__init__(table, weights, seed)
        self.opt = optimizer
        self.sigma = sigma
        self.cv = ControlVariateState() if use_cv else None

    def choose(self, cands):
        return szo_propose(self.w, cands.features, self.rng, self.sigma)

    def learn(self, cands, index, reward, noise):
        self.w = optimizer_step(self.opt, self.w, szo_gradient(noise, reward, self.cv))

    def state_dict(self):
        d = super().state_dict()
        d["optimizer"] = self.opt.to_dict()
        d["cv"] = None if self.cv is None else self.cv.to_dict()
        d["sigma"] = self.sigma
        return d

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.opt = OptimizerState.from_dict(state["optimizer"])
        self.cv = None if state["cv"] is None else ControlVariateState.from_dict(state["cv"])
        self.sigma = float(state["sigma"])


SEED_ARM, ADAPTED_ARM = 0, 1


class UCB1EnsembleLearner(CandidateLearner):
    """Chooses per source between the seed model and a reward-regression model."""

    kind = LearnerKind.UCB1_ENSEMBLE

    def __init__(self, table, seed_weights, variant: UcbVariant = UcbVariant.VANILLA,
                 regressor_lr: float = 0.05, sampling_temperature: float = 0.1, seed: int = 0):
        super().__init__(table, seed)
        self.seed_weights = np.array(seed_weights, dtype=np.float64)
        self.variant = UcbVariant(variant)
        self.stats = UcbArmStats.empty(2)
        self.regressor = RewardRegressor.zeros(len(self.seed_weights), regressor_lr)
        self.sampling_temperature = sampling_temperature

    def _arm_index(self, arm, features):
        if arm == SEED_ARM:
            return int(np.argmax(candidate_scores(self.seed_weights, features)))
        return int(np.argmax(self.regressor.predict_raw(features)))

    def choose(self, cands):
        arm = ucb1_select(self.stats, self.variant, self.rng, self.sampling_temperature)
        train_regressor = True
        if self.variant is UcbVariant.HOLDOUT_FILTERED:
            train_regressor = bool(self.rng.random() < 0.5)
        return self._arm_index(arm, cands.features), (arm, train_regressor)

    def learn(self, cands, index, reward, extra):
        arm, train_regressor = extra
        if self.variant is not UcbVariant.HOLDOUT_FILTERED or not train_regressor:
            self.stats.update(arm, reward)
        if train_regressor:
            self.regressor.update(cands.features[index], reward)

    def greedy_index(self, features):
        best_arm = int(np.argmax(self.stats.means)) if self.stats.total else SEED_ARM
        return self._arm_index(best_arm, features)

    def state_dict(self):
        d = super().state_dict()
        d.update(seed_weights=self.seed_weights.tolist(), variant=self.variant.value,
                 stats=self.stats.to_dict(), regressor=self.regressor.to_dict(),
                 sampling_temperature=self.sampling_temperature)
        return d

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.seed_weights = np.asarray(state["seed_weights"], dtype=np.float64)
        self.variant = UcbVariant(state["variant"])
        self.stats = UcbArmStats.from_dict(state["stats"])
        self.regressor = RewardRegressor.from_dict(state["regressor"])
        self.sampling_temperature = float(state["sampling_temperature"])


@dataclass
class LearnerConfig:
    kind: LearnerKind = LearnerKind.EL_CV
    optimizer: OptimizerKind = OptimizerKind.ADAM
    lr: float = 0.05
    k_start: Optional[int] = None
    sigma: float = 1.0
    use_cv: bool = True
    ucb_variant: UcbVariant = UcbVariant.VANILLA
    regressor_lr: float = 0.05
    seed: int = 42

    def __post_init__(self):
        self.kind = LearnerKind(self.kind)
        self.optimizer = OptimizerKind(self.optimizer)
        self.ucb_variant = UcbVariant(self.ucb_variant)


def make_learner(cfg: LearnerConfig, table: CandidateTable, init_weights=None,
                 instances: Optional[Sequence[Instance]] = None) -> Learner:
    dim = table.dim
    w0 = np.zeros(dim) if init_weights is None else np.asarray(init_weights, dtype=np.float64)
    if w0.shape != (dim,):
        raise LearnerError(f"initial weights have shape {w0.shape}, candidate features have dimension {dim}")
    if cfg.kind is LearnerKind.STATIC:
        return StaticLearner(table, w0, cfg.seed)
    if cfg.kind is LearnerKind.ORACLE:
        if instances is None:
            raise LearnerError("the oracle learner needs the reference-bearing instances")
        return OracleLearner(instances)
    opt = OptimizerState(cfg.optimizer, dim, lr=cfg.lr)
    if cfg.kind is LearnerKind.EL_CV:
        anneal = None if cfg.k_start is None else AnnealSchedule(cfg.k_start)
        return ELLearner(table, w0, opt, cfg.use_cv, anneal, cfg.seed)
    if cfg.kind is LearnerKind.SZO_CV:
        return SZOLearner(table, w0, opt, cfg.sigma, cfg.use_cv, cfg.seed)
    return UCB1EnsembleLearner(table, w0, cfg.ucb_variant, cfg.regressor_lr, seed=cfg.seed)


# -- checkpoints ----------------------------------------------------------------

def save_checkpoint(path, learner: Learner, round_: int, metadata: Optional[dict] = None,
                    fsync: bool = True) -> None:
    """Atomically write a versioned model checkpoint."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "version": CHECKPOINT_VERSION,
        "round": round_,
        "learner": learner.state_dict(),
        "metadata": metadata or {},
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(record, fh)
            fh.flush()
            if fsync:
                os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> dict:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("version") != CHECKPOINT_VERSION:
        raise LearnerError(f"{path}: unsupported checkpoint version {record.get('version')}")
    return record


def restore_learner(record: dict, table: CandidateTable,
                    instances: Optional[Sequence[Instance]] = None) -> Learner:
    """Rebuild a learner from a checkpoint record."""
    state = record["learner"]
    kind = LearnerKind(state["kind"])
    dim = table.dim
    if kind is LearnerKind.ORACLE:
        learner = OracleLearner(instances or [])
    elif kind is LearnerKind.STATIC:
        learner = StaticLearner(table, np.zeros(dim))
    elif kind is LearnerKind.EL_CV:
        learner = ELLearner(table, np.zeros(dim), OptimizerState(OptimizerKind.SGD, dim))
    elif kind is LearnerKind.SZO_CV:
        learner = SZOLearner(table, np.zeros(dim), OptimizerState(OptimizerKind.SGD, dim))
    else:
        learner = UCB1EnsembleLearner(table, np.zeros(dim))
    learner.load_state_dict(state)
    return learner
