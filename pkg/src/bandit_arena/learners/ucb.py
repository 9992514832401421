"""UCB1 arm selection and the linear reward regressor behind the "adapted" arm."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class UcbVariant(str, enum.Enum):
    VANILLA = "VANILLA"
    SAMPLING = "SAMPLING"
    HOLDOUT_FILTERED = "HOLDOUT_FILTERED"


@dataclass
class UcbArmStats:
    counts: list = field(default_factory=list)
    means: list = field(default_factory=list)

    @classmethod
    def empty(cls, n_arms: int) -> "UcbArmStats":
        return cls([0] * n_arms, [0.0] * n_arms)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def update(self, arm: int, reward: float) -> None:
        self.counts[arm] += 1
        self.means[arm] += (reward - self.means[arm]) / self.counts[arm]

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "means": list(self.means)}

    @classmethod
    def from_dict(cls, d: dict) -> "UcbArmStats":
        return cls(list(d["counts"]), list(d["means"]))


def ucb1_indices(stats: UcbArmStats) -> np.ndarray:
    n = stats.total
    counts = np.asarray(stats.counts, dtype=np.float64)
    return np.asarray(stats.means) + np.sqrt(2.0 * math.log(n) / counts)


def ucb1_select(stats: UcbArmStats, variant: UcbVariant = UcbVariant.VANILLA,
                rng: np.random.Generator | None = None, temperature: float = 0.1) -> int:
    """Unplayed arms first (lowest index), then the UCB1 rule.

    SAMPLING draws from a softmax over the indices at ``temperature`` instead
    of taking the argmax. HOLDOUT_FILTERED selects like VANILLA; the caller
    keeps regressor-training rounds out of ``stats``.
    """
    if not stats.counts:
        raise ValueError("UCB1 needs at least one arm")
    for arm, c in enumerate(stats.counts):
        if c == 0:
            return arm
    idx = ucb1_indices(stats)
    if UcbVariant(variant) is UcbVariant.SAMPLING:
        if rng is None:
            raise ValueError("SAMPLING variant needs an rng")
        z = np.exp((idx - idx.max()) / temperature)
        return int(rng.choice(len(idx), p=z / z.sum()))
    return int(np.argmax(idx))


@dataclass
class RewardRegressor:
    """Online least squares (SGD on squared error) predicting reward from features."""

    weights: np.ndarray
    lr: float = 0.05
    count: int = 0

    @classmethod
    def zeros(cls, dim: int, lr: float = 0.05) -> "RewardRegressor":
        return cls(np.zeros(dim), lr)

    def _check(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.weights.shape[0]:
            raise ValueError(f"feature dimension {features.shape[-1]} != regressor dimension {self.weights.shape[0]}")
        return features

    def predict_raw(self, features) -> np.ndarray | float:
        return self._check(features) @ self.weights

    def score(self, features):
        return np.clip(self.predict_raw(features), 0.0, 1.0)

    def update(self, features, reward: float) -> None:
        phi = self._check(features)
        err = reward - float(phi @ self.weights)
        self.weights = self.weights + self.lr * err * phi
        self.count += 1
        if not np.all(np.isfinite(self.weights)):
            raise FloatingPointError("reward regressor diverged")

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "lr": self.lr, "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardRegressor":
        return cls(np.asarray(d["weights"], dtype=np.float64), float(d["lr"]), int(d["count"]))


def reward_regressor_update(rr: RewardRegressor, features, reward: float) -> RewardRegressor:
    rr.update(features, reward)
    return rr


def reward_regressor_score(rr: RewardRegressor, features):
    return rr.score(features)
