"""Instances, candidate sets and the line-delimited dataset format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .bleu import smoothed_sentence_bleu


@dataclass
class Candidate:
    tokens: list[str]
    features: np.ndarray

    def __post_init__(self):
        self.tokens = list(self.tokens)
        self.features = np.asarray(self.features, dtype=np.float64)


@dataclass
class Instance:
    """One learning round's payload. ``reference`` never leaves the server."""

    id: str
    source: list[str]
    reference: list[str]
    candidates: list[Candidate]
    held_out: bool = False
    oracle_reward: float = field(default=float("nan"))
    oracle_index: int = -1
    oracle_translation: Optional[list] = None

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"instance {self.id}: empty candidate set")
        dims = {c.features.shape for c in self.candidates}
        if len(dims) != 1:
            raise ValueError(f"instance {self.id}: candidates disagree on feature dimension")
        if np.isnan(self.oracle_reward) or self.oracle_index < 0:
            self.oracle_index, self.oracle_reward = best_candidate(self.candidates, self.reference)

    @property
    def oracle_tokens(self) -> list[str]:
        if self.oracle_translation is not None:
            return list(self.oracle_translation)
        return list(self.candidates[self.oracle_index].tokens)

    @property
    def dim(self) -> int:
        return self.candidates[0].features.shape[0]

    def feature_matrix(self) -> np.ndarray:
        return np.stack([c.features for c in self.candidates])

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "source": " ".join(self.source),
            "reference": " ".join(self.reference),
            "candidates": [
                {"tokens": " ".join(c.tokens), "features": c.features.tolist()}
                for c in self.candidates
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Instance":
        return cls(
            id=str(rec["id"]),
            source=rec["source"].split(),
            reference=rec["reference"].split(),
            candidates=[Candidate(c["tokens"].split(), c["features"]) for c in rec["candidates"]],
        )


def best_candidate(candidates: Sequence[Candidate], reference: Sequence[str]) -> tuple[int, float]:
    """Index and reward of the best candidate; ties go to the lowest index."""
    best_i, best_r = 0, -1.0
    for i, c in enumerate(candidates):
        r = smoothed_sentence_bleu(c.tokens, reference)
        if r > best_r:
            best_i, best_r = i, r
    return best_i, best_r


def write_dataset(instances: Iterable[Instance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")


def read_dataset(path) -> list[Instance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(Instance.from_record(json.loads(line)))
            except (KeyError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad dataset record ({exc})") from exc
    return out


def apply_oracle_overrides(instances: Iterable[Instance], path) -> None:
    """Replace oracle translations with externally supplied ones.

    ``path`` holds a JSON object mapping instance id to a space-joined
    translation.
    """
    overrides = json.loads(Path(path).read_text(encoding="utf-8"))
    for inst in instances:
        if inst.id in overrides:
            tokens = overrides[inst.id].split()
            inst.oracle_translation = tokens
            inst.oracle_reward = smoothed_sentence_bleu(tokens, inst.reference)
