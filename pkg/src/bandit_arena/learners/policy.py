"""Linear softmax policy over a candidate set and its bandit gradient estimators.

All gradients follow the ascent convention: adding them to the weights
increases expected reward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PolicyError(ValueError):
    pass


@dataclass
class PolicyDistribution:
    probabilities: np.ndarray
    temperature: float

    def entropy(self) -> float:
        p = self.probabilities[self.probabilities > 0]
        return float(-(p * np.log(p)).sum())


def candidate_scores(w: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Inner product of ``w`` with each row of the candidate feature matrix."""
    features = np.atleast_2d(features)
    if features.shape[1] != w.shape[0]:
        raise PolicyError(f"feature dimension {features.shape[1]} != weight dimension {w.shape[0]}")
    return features @ w


def softmax_with_temperature(scores: np.ndarray, temperature: float = 1.0) -> PolicyDistribution:
    if not temperature > 0:
        raise PolicyError(f"temperature must be positive, got {temperature}")
    z = np.asarray(scores, dtype=np.float64) / temperature
    z = np.exp(z - z.max())
    return PolicyDistribution(z / z.sum(), float(temperature))


def el_gradient(w: np.ndarray, features: np.ndarray, sampled_index: int, reward: float,
                temperature: float = 1.0) -> np.ndarray:
    """Score-function estimate ``reward * (phi_sampled - E_p[phi])``."""
    features = np.atleast_2d(features)
    if not 0 <= sampled_index < features.shape[0]:
        raise PolicyError(f"sampled index {sampled_index} out of range for {features.shape[0]} candidates")
    p = softmax_with_temperature(candidate_scores(w, features), temperature).probabilities
    return reward * (features[sampled_index] - p @ features)


def expected_el_gradient(w: np.ndarray, features: np.ndarray, rewards: np.ndarray,
                         temperature: float = 1.0, baseline: float = 0.0) -> np.ndarray:
    """Exact expectation of ``el_gradient`` under the policy, enumerating candidates."""
    features = np.atleast_2d(features)
    p = softmax_with_temperature(candidate_scores(w, features), temperature).probabilities
    centered = features - p @ features
    return (p * (np.asarray(rewards) - baseline)) @ centered


def expected_reward(w: np.ndarray, features: np.ndarray, rewards: np.ndarray,
                    temperature: float = 1.0) -> float:
    p = softmax_with_temperature(candidate_scores(w, features), temperature).probabilities
    return float(p @ np.asarray(rewards))


@dataclass
class ControlVariateState:
    """Running mean of all rewards seen so far."""

    count: int = 0
    mean: float = 0.0
    total: float = 0.0

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "total": self.total}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlVariateState":
        return cls(int(d["count"]), float(d["mean"]), float(d["total"]))


def cv_adjust(state: ControlVariateState, reward: float) -> float:
    """Fold ``reward`` into the running mean, then return ``reward - mean``."""
    state.count += 1
    state.total += reward
    state.mean = state.total / state.count
    return reward - state.mean


def szo_propose(w: np.ndarray, features: np.ndarray, rng: np.random.Generator,
                sigma: float = 1.0, noise: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Perturb ``w`` with Gaussian noise and return the argmax candidate and the noise."""
    eps = sigma * rng.standard_normal(w.shape[0]) if noise is None else np.asarray(noise, dtype=np.float64)
    return int(np.argmax(candidate_scores(w + eps, features))), eps


def szo_gradient(noise: np.ndarray, reward: float, cv: ControlVariateState | None) -> np.ndarray:
    """One-point estimate ``(reward - running mean) * eps``."""
    adjusted = reward if cv is None else cv_adjust(cv, reward)
    return adjusted * noise


def szo_step(w, features, rng, cv, feedback, sigma=1.0, noise=None):
    """Propose under perturbed weights, query ``feedback(index)``, return ``(index, gradient)``."""
    index, eps = szo_propose(w, features, rng, sigma, noise)
    return index, szo_gradient(eps, feedback(index), cv)
