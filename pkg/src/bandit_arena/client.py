"""Client SDK: the request -> propose -> submit -> update loop over HTTP.

Transport failures (connection errors, timeouts, 5xx) and 429 responses are
retried with exponential backoff. A 409 is never retried blindly: it means the
client and server disagree about the protocol state. The one exception is a
409 that follows a retried request, where the first attempt may have reached
the server; the client then asks ``/v1/status`` what was committed, so each
scored round is handed to ``learner.update`` exactly once.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import requests

from .environment import SourceMessage

log = logging.getLogger(__name__)


class ClientError(Exception):
    pass


class TransportError(ClientError):
    pass


class ProtocolError(ClientError):
    pass


class AuthError(ClientError):
    pass


class Exhausted(ClientError):
    pass


class ResumeMismatch(ClientError):
    pass


@dataclass
class ClientConfig:
    base_url: str
    api_key: str
    max_attempts: int = 5
    backoff: float = 0.05
    max_backoff: float = 2.0
    timeout: float = 10.0


@dataclass
class LoopSummary:
    rounds: int = 0
    cumulative_reward: float = 0.0
    duration: float = 0.0
    stopped: str = "max_rounds"
    error: Optional[str] = None
    rewards: list = field(default_factory=list, repr=False)


class ArenaClient:
    def __init__(self, config: ClientConfig, session: Optional[requests.Session] = None):
        self.config = config
        self.http = session or requests.Session()
        self.http.headers["X-Api-Key"] = config.api_key

    def _request(self, method: str, path: str, payload=None) -> tuple[requests.Response, int]:
        """Returns the final response and the number of attempts it took."""
        cfg = self.config
        delay = cfg.backoff
        last_exc = None
        for attempt in range(1, cfg.max_attempts + 1):
            try:
                resp = self.http.request(method, cfg.base_url.rstrip("/") + path,
                                         json=payload, timeout=cfg.timeout)
            except requests.RequestException as exc:
                last_exc = exc
            else:
                if resp.status_code != 429 and resp.status_code < 500:
                    return resp, attempt
                last_exc = TransportError(f"HTTP {resp.status_code}")
            if attempt < cfg.max_attempts:
                time.sleep(delay)
                delay = min(cfg.max_backoff, delay * 2)
        raise TransportError(f"{method} {path} failed after {cfg.max_attempts} attempts: {last_exc}")

    @staticmethod
    def _raise_for(resp: requests.Response):
        if resp.status_code == 401:
            raise AuthError("invalid API key")
        if resp.status_code == 409:
            raise ProtocolError(resp.json().get("detail", "protocol violation"))
        if resp.status_code == 410:
            raise Exhausted("sequence exhausted")
        if resp.status_code != 200:
            raise ClientError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")

    def status(self) -> dict:
        resp, _ = self._request("GET", "/v1/status")
        self._raise_for(resp)
        return resp.json()

    def leaderboard(self) -> list:
        resp, _ = self._request("GET", "/v1/leaderboard")
        self._raise_for(resp)
        return resp.json()

    def get_source(self) -> SourceMessage:
        resp, attempts = self._request("GET", "/v1/source")
        if resp.status_code == 409 and attempts > 1:
            issued = self.status().get("issued")
            if issued is not None:
                return SourceMessage(issued["round"], issued["instance_id"], issued["source_tokens"])
        self._raise_for(resp)
        body = resp.json()
        return SourceMessage(body["round"], body["instance_id"], body["source_tokens"])

    def post_translation(self, msg: SourceMessage, tokens) -> float:
        resp, attempts = self._request("POST", "/v1/translation",
                                       {"instance_id": msg.instance_id, "tokens": list(tokens)})
        if resp.status_code == 409 and attempts > 1:
            st = self.status()
            if st["last_round"] == msg.round and st["rounds_completed"] == msg.round + 1:
                return float(st["last_reward"])
        self._raise_for(resp)
        body = resp.json()
        if body["round"] != msg.round:
            raise ProtocolError(f"server scored round {body['round']}, expected {msg.round}")
        return float(body["reward"])


class MirrorLog:
    """Client-side append-only record of submissions; reward is null until scored."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def _append(self, rec: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec) + "\n")
            fh.flush()

    def pending(self, msg: SourceMessage, tokens) -> None:
        self._append({"round": msg.round, "instance_id": msg.instance_id, "tokens": list(tokens),
                      "reward": None, "timestamp": time.time()})

    def commit(self, msg: SourceMessage, tokens, reward: float) -> None:
        self._append({"round": msg.round, "instance_id": msg.instance_id, "tokens": list(tokens),
                      "reward": reward, "timestamp": time.time()})

    def records(self) -> dict[int, dict]:
        """Latest record per round."""
        out: dict[int, dict] = {}
        if not self.path.exists():
            return out
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn tail from a crash
                out[int(rec["round"])] = rec
        return out


def _loop(client: ArenaClient, learner, max_rounds: int, mirror: Optional[MirrorLog],
          first: Optional[SourceMessage] = None, summary: Optional[LoopSummary] = None,
          on_round: Optional[Callable] = None) -> LoopSummary:
    summary = summary or LoopSummary()
    start = time.monotonic()
    try:
        while summary.rounds < max_rounds:
            if first is not None:
                msg, first = first, None
            else:
                try:
                    msg = client.get_source()
                except Exhausted:
                    summary.stopped = "exhausted"
                    break
            tokens = learner.propose(msg)
            if mirror is not None:
                mirror.pending(msg, tokens)
            reward = client.post_translation(msg, tokens)
            if mirror is not None:
                mirror.commit(msg, tokens, reward)
            learner.update(msg, tokens, reward)
            summary.rounds += 1
            summary.cumulative_reward += reward
            summary.rewards.append(reward)
            if on_round is not None:
                on_round(msg, reward)
    except TransportError as exc:
        summary.stopped, summary.error = "transport_error", str(exc)
    except ProtocolError as exc:
        summary.stopped, summary.error = "protocol_error", str(exc)
    summary.duration += time.monotonic() - start
    return summary


def run_online_loop(config: ClientConfig, learner, max_rounds: int, mirror_path=None,
                    client: Optional[ArenaClient] = None, on_round: Optional[Callable] = None) -> LoopSummary:
    """Run up to ``max_rounds`` rounds; stops cleanly when the sequence is exhausted."""
    client = client or ArenaClient(config)
    mirror = MirrorLog(mirror_path) if mirror_path is not None else None
    return _loop(client, learner, max_rounds, mirror, on_round=on_round)


def resume_online_loop(config: ClientConfig, learner, mirror_path, max_rounds: int,
                       client: Optional[ArenaClient] = None, on_round: Optional[Callable] = None) -> LoopSummary:
    """Continue from the server's cursor after reconciling the local mirror log.

    ``learner.rounds`` (when present) says how many rounds the learner has
    already absorbed. Rounds the server scored after that point are replayed
    from the mirror: the learner re-proposes, the tokens are checked against
    the mirror, and the committed reward is applied. A submission whose
    response was lost takes its reward from ``/v1/status``.
    """
    client = client or ArenaClient(config)
    mirror = MirrorLog(mirror_path)
    records = mirror.records()
    status = client.status()
    done = status["rounds_completed"]
    committed = sorted(r for r, rec in records.items() if rec["reward"] is not None)
    if committed != list(range(len(committed))):
        raise ResumeMismatch(f"local log has non-contiguous scored rounds: {committed[:10]}")
    if len(committed) > done:
        raise ResumeMismatch(f"local log has {len(committed)} scored rounds, server only {done}")
    absorbed = getattr(learner, "rounds", len(committed))
    if absorbed > done:
        raise ResumeMismatch(f"learner has absorbed {absorbed} rounds, server only scored {done}")

    summary = LoopSummary()
    for r in range(absorbed, done):
        rec = records.get(r)
        if rec is None:
            raise ResumeMismatch(f"server scored round {r} but the local log has no record of it")
        reward = rec["reward"]
        if reward is None:
            if r != done - 1 or status["last_round"] != r:
                raise ResumeMismatch(f"round {r} is pending locally but not the server's last round")
            reward = float(status["last_reward"])
        msg = SourceMessage(r, rec["instance_id"], [])
        tokens = learner.propose(msg)
        if list(tokens) != list(rec["tokens"]):
            raise ResumeMismatch(f"learner re-proposed different tokens for round {r}")
        if rec["reward"] is None:
            mirror.commit(msg, tokens, reward)
        learner.update(msg, tokens, reward)
        summary.rounds += 1
        summary.cumulative_reward += reward
        summary.rewards.append(reward)
        if on_round is not None:
            on_round(msg, reward)

    first = None
    issued = status.get("issued")
    if issued is not None and issued["round"] == done:
        first = SourceMessage(issued["round"], issued["instance_id"], issued["source_tokens"])
    return _loop(client, learner, max_rounds, mirror, first, summary, on_round)
