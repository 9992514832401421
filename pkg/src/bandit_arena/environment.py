"""The online learning environment: sequence plan, per-participant protocol
state machine and the append-only round log.

A participant alternates strictly between ``next_source`` and
``submit_translation``; every scored round is appended to the round log
before the reward is handed back, so a restart can rebuild each session by
replaying its log.
"""
from __future__ import annotations

import enum
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .bleu import smoothed_sentence_bleu
from .data import Instance


class ArenaError(Exception):
    """Base class for protocol and log errors."""


class ProtocolViolation(ArenaError):
    pass


class SequenceExhausted(ArenaError):
    pass


class CorruptLog(ArenaError):
    pass


class PlanError(ValueError):
    pass


class SessionState(str, enum.Enum):
    IDLE = "IDLE"
    SOURCE_ISSUED = "SOURCE_ISSUED"
    EXHAUSTED = "EXHAUSTED"


@dataclass(frozen=True)
class SequencePlan:
    ids: tuple[str, ...]
    blocks: tuple[tuple[int, int], ...]

    @property
    def total(self) -> int:
        return len(self.ids)

    def heldout_mask(self) -> np.ndarray:
        mask = np.zeros(self.total, dtype=bool)
        for start, length in self.blocks:
            mask[start:start + length] = True
        return mask

    def to_dict(self) -> dict:
        return {"ids": list(self.ids), "blocks": [list(b) for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> "SequencePlan":
        return cls(tuple(d["ids"]), tuple((int(s), int(n)) for s, n in d["blocks"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SequencePlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_sequence(dataset: Sequence[Instance], heldout: Sequence[Instance],
                   insertions: int, seed: int) -> SequencePlan:
    """Shuffle the training stream and embed the held-out block at the start,
    at even intervals, and (for two or more insertions) at the very end."""
    if insertions < 1:
        raise PlanError("insertions must be >= 1")
    if not heldout:
        raise PlanError("held-out set is empty")
    n_train = len(dataset)
    if insertions > 1 and n_train < insertions - 1:
        raise PlanError(
            f"{insertions} insertions need at least {insertions - 1} training instances between blocks"
        )
    train_ids = [inst.id for inst in dataset]
    held_ids = [inst.id for inst in heldout]
    overlap = set(train_ids) & set(held_ids)
    if overlap:
        raise PlanError(f"instance ids shared by training and held-out data: {sorted(overlap)[:5]}")

    order = np.random.default_rng(seed).permutation(n_train)
    shuffled = [train_ids[i] for i in order]

    if insertions == 1:
        gaps = [n_train]
    else:
        base, extra = divmod(n_train, insertions - 1)
        gaps = [base + (1 if g < extra else 0) for g in range(insertions - 1)]

    ids: list[str] = []
    blocks = []
    pos = 0
    for b in range(insertions):
        blocks.append((len(ids), len(held_ids)))
        ids.extend(held_ids)
        if b < len(gaps):
            ids.extend(shuffled[pos:pos + gaps[b]])
            pos += gaps[b]
    return SequencePlan(tuple(ids), tuple(blocks))


@dataclass
class RoundLog:
    round: int
    instance_id: str
    tokens: list[str]
    reward: float
    oracle_reward: Optional[float]
    held_out: bool
    timestamp: float = 0.0

    def to_record(self) -> dict:
        return {
            "round": self.round,
            "instance_id": self.instance_id,
            "tokens": list(self.tokens),
            "reward": self.reward,
            "oracle_reward": self.oracle_reward,
            "held_out": self.held_out,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "RoundLog":
        return cls(
            round=int(rec["round"]),
            instance_id=str(rec["instance_id"]),
            tokens=list(rec["tokens"]),
            reward=float(rec["reward"]),
            oracle_reward=None if rec.get("oracle_reward") is None else float(rec["oracle_reward"]),
            held_out=bool(rec.get("held_out", False)),
            timestamp=float(rec.get("timestamp", 0.0)),
        )


@dataclass
class ParticipantSession:
    participant_id: str = ""
    api_key: str = ""
    total_rounds: int = 0
    state: SessionState = SessionState.IDLE
    cursor: int = 0
    issued_instance_id: Optional[str] = None
    issued_at: Optional[float] = None
    cumulative_reward: float = 0.0
    running_mean_reward: float = 0.0
    round_logs: list[RoundLog] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def _record(self, log: RoundLog) -> None:
        self.round_logs.append(log)
        self.cursor = log.round + 1
        self.cumulative_reward += log.reward
        self.running_mean_reward = self.cumulative_reward / self.cursor

    def refresh_exhausted(self) -> None:
        if self.state is SessionState.IDLE and self.cursor >= self.total_rounds:
            self.state = SessionState.EXHAUSTED


def replay_session(logs: Sequence[RoundLog], participant_id: str = "", api_key: str = "",
                   total_rounds: Optional[int] = None) -> ParticipantSession:
    """Rebuild a session from its round log. Rejects gaps and duplicates."""
    session = ParticipantSession(participant_id=participant_id, api_key=api_key,
                                 total_rounds=len(logs) if total_rounds is None else total_rounds)
    for expected, log in enumerate(logs):
        if log.round != expected:
            kind = "duplicate" if log.round < expected else "gap"
            raise CorruptLog(f"{kind} in round log: expected round {expected}, found {log.round}")
        session._record(log)
    if session.cursor > session.total_rounds:
        raise CorruptLog(f"log has {session.cursor} rounds but the plan only {session.total_rounds}")
    session.refresh_exhausted()
    return session


class RoundLogWriter:
    """Append-only, fsync'd line-delimited round log."""

    def __init__(self, path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self.path.parent.mkdir(parents=True, exist_ok=True)
        _truncate_torn_tail(self.path)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, log: RoundLog) -> None:
        self._fh.write(json.dumps(log.to_record()) + "\n")
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()


def _truncate_torn_tail(path: Path) -> None:
    # a crash mid-append leaves a partial last line; that round was never acknowledged
    if not path.exists():
        return
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        cut = data.rfind(b"\n") + 1
        with open(path, "r+b") as fh:
            fh.truncate(cut)


def read_round_logs(path) -> list[RoundLog]:
    path = Path(path)
    if not path.exists():
        return []
    logs = []
    lines = path.read_text(encoding="utf-8").split("\n")
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            logs.append(RoundLog.from_record(json.loads(line)))
        except json.JSONDecodeError:
            if i == len(lines) - 1:  # torn tail
                break
            raise CorruptLog(f"{path}:{i + 1}: unreadable record")
    return logs


@dataclass(frozen=True)
class SourceMessage:
    round: int
    instance_id: str
    source_tokens: list[str]

    def to_wire(self) -> dict:
        return {"round": self.round, "instance_id": self.instance_id,
                "source_tokens": list(self.source_tokens)}


class Environment:
    """Owns the instances and plan and drives every participant's state machine.

    ``sink`` is called with ``(session, log)`` after a round is scored and
    before the reward is returned; persistence hooks in there.
    """

    def __init__(self, instances: Sequence[Instance], plan: SequencePlan,
                 sink: Optional[Callable[[ParticipantSession, RoundLog], None]] = None,
                 clock: Callable[[], float] = time.time):
        self.instances = {inst.id: inst for inst in instances}
        missing = [i for i in set(plan.ids) if i not in self.instances]
        if missing:
            raise PlanError(f"plan references unknown instances: {sorted(missing)[:5]}")
        self.plan = plan
        self._heldout = plan.heldout_mask()
        self.sink = sink
        self.clock = clock

    @property
    def total_rounds(self) -> int:
        return self.plan.total

    def new_session(self, participant_id: str = "", api_key: str = "") -> ParticipantSession:
        session = ParticipantSession(participant_id=participant_id, api_key=api_key,
                                     total_rounds=self.total_rounds)
        session.refresh_exhausted()
        return session

    def restore_session(self, logs: Sequence[RoundLog], participant_id: str = "",
                        api_key: str = "") -> ParticipantSession:
        session = replay_session(logs, participant_id, api_key, total_rounds=self.total_rounds)
        for log in logs:
            if log.instance_id != self.plan.ids[log.round]:
                raise CorruptLog(f"round {log.round} logged for {log.instance_id}, "
                                 f"plan has {self.plan.ids[log.round]}")
        return session

    def is_heldout(self, k: int) -> bool:
        return bool(self._heldout[k])

    def next_source(self, session: ParticipantSession) -> SourceMessage:
        with session.lock:
            if session.state is SessionState.SOURCE_ISSUED:
                raise ProtocolViolation("a source is already issued; submit a translation first")
            if session.cursor >= self.total_rounds:
                session.state = SessionState.EXHAUSTED
                raise SequenceExhausted(f"all {self.total_rounds} rounds consumed")
            inst = self.instances[self.plan.ids[session.cursor]]
            session.state = SessionState.SOURCE_ISSUED
            session.issued_instance_id = inst.id
            session.issued_at = self.clock()
            return SourceMessage(session.cursor, inst.id, list(inst.source))

    def issued_message(self, session: ParticipantSession) -> Optional[SourceMessage]:
        if session.state is not SessionState.SOURCE_ISSUED:
            return None
        inst = self.instances[session.issued_instance_id]
        return SourceMessage(session.cursor, inst.id, list(inst.source))

    def submit_translation(self, session: ParticipantSession, instance_id: str,
                           tokens: Sequence[str]) -> float:
        with session.lock:
            if session.state is not SessionState.SOURCE_ISSUED:
                raise ProtocolViolation("no source issued for this participant")
            if instance_id != session.issued_instance_id:
                raise ProtocolViolation(
                    f"instance {instance_id!r} is not the issued instance {session.issued_instance_id!r}"
                )
            inst = self.instances[instance_id]
            k = session.cursor
            reward = smoothed_sentence_bleu(tokens, inst.reference)
            log = RoundLog(round=k, instance_id=instance_id, tokens=list(tokens), reward=reward,
                           oracle_reward=inst.oracle_reward, held_out=self.is_heldout(k),
                           timestamp=self.clock())
            if self.sink is not None:
                self.sink(session, log)
            session._record(log)
            session.state = SessionState.IDLE
            session.issued_instance_id = None
            session.issued_at = None
            session.refresh_exhausted()
            return reward
