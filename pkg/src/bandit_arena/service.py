"""JSON-over-HTTP front end for the environment.

Endpoints (all bodies UTF-8 JSON, auth via ``X-Api-Key``)::

    GET  /v1/source       -> {round, instance_id, source_tokens}
    POST /v1/translation  <- {instance_id, tokens}   -> {round, reward}
    GET  /v1/status       -> progress of the calling participant
    GET  /v1/leaderboard  -> public, sorted by cumulative reward

State lives in ``state_dir``: ``plan.json``, ``credentials.json`` and one
append-only round log per participant under ``logs/``. A round is committed
to its log before the reward is sent, and sessions are rebuilt from the logs
on start-up.
"""
from __future__ import annotations

import json
import logging
import socket
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Optional, Sequence

from .data import Instance
from .environment import (
    CorruptLog,
    Environment,
    ParticipantSession,
    ProtocolViolation,
    RoundLog,
    RoundLogWriter,
    SequenceExhausted,
    SequencePlan,
    read_round_logs,
)
from .evaluation import checkpoint_eval

log = logging.getLogger(__name__)

DEFAULT_RATE_LIMIT = 10.0
STATE_DIR_ENV = "BANDIT_ARENA_STATE_DIR"


@dataclass(frozen=True)
class ApiCredential:
    participant_id: str
    key: str
    rate_limit: float = DEFAULT_RATE_LIMIT


class TokenBucket:
    def __init__(self, rate: float, capacity: Optional[float] = None, clock: Callable[[], float] = time.monotonic):
        self.rate = rate
        self.capacity = max(1.0, rate if capacity is None else capacity)
        self.tokens = self.capacity
        self.clock = clock
        self.stamp = clock()
        self.lock = threading.Lock()

    def allow(self) -> bool:
        with self.lock:
            now = self.clock()
            self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
            self.stamp = now
            if self.tokens >= 1.0:
                self.tokens -= 1.0
                return True
            return False


class ConfigError(ValueError):
    pass


def load_credentials(path) -> list[ApiCredential]:
    path = Path(path)
    if not path.exists():
        return []
    raw = json.loads(path.read_text(encoding="utf-8"))
    return [ApiCredential(c["participant_id"], c["key"], float(c.get("rate_limit", DEFAULT_RATE_LIMIT)))
            for c in raw]


def save_credentials(path, creds: Sequence[ApiCredential]) -> None:
    Path(path).write_text(json.dumps([c.__dict__ for c in creds], indent=2), encoding="utf-8")


class ArenaService:
    """Transport-independent request handler; ``handle`` maps a request to ``(status, body)``."""

    def __init__(self, instances: Sequence[Instance], plan: SequencePlan, state_dir,
                 credentials: Sequence[ApiCredential] = (), fsync: bool = True,
                 clock: Callable[[], float] = time.time, monotonic: Callable[[], float] = time.monotonic):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.env = Environment(instances, plan, sink=self._commit, clock=clock)
        self.references = {inst.id: inst.reference for inst in instances}
        self.clock = clock
        self.fsync = fsync

        plan_path = self.state_dir / "plan.json"
        if plan_path.exists():
            if SequencePlan.load(plan_path) != plan:
                raise ConfigError(f"{plan_path} holds a different sequence plan; use a fresh state dir")
        else:
            plan.save(plan_path)

        cred_path = self.state_dir / "credentials.json"
        merged = {c.key: c for c in load_credentials(cred_path)}
        for c in credentials:
            merged[c.key] = c
        ids = [c.participant_id for c in merged.values()]
        if len(ids) != len(set(ids)):
            raise ConfigError("participant ids must be unique")
        save_credentials(cred_path, list(merged.values()))

        self._creds = merged
        self._buckets = {k: TokenBucket(c.rate_limit, clock=monotonic) for k, c in merged.items()}
        self._sessions: dict[str, ParticipantSession] = {}
        self._writers: dict[str, RoundLogWriter] = {}
        self._board_cache: dict[str, tuple[int, dict]] = {}
        for cred in merged.values():
            path = self._log_path(cred.participant_id)
            logs = read_round_logs(path)
            self._sessions[cred.participant_id] = self.env.restore_session(logs, cred.participant_id, cred.key)
            self._writers[cred.participant_id] = RoundLogWriter(path, fsync=fsync)

    def _log_path(self, participant_id: str) -> Path:
        return self.state_dir / "logs" / f"{participant_id}.jsonl"

    def _commit(self, session: ParticipantSession, entry: RoundLog) -> None:
        self._writers[session.participant_id].append(entry)

    def close(self) -> None:
        for w in self._writers.values():
            w.close()

    def session(self, participant_id: str) -> ParticipantSession:
        return self._sessions[participant_id]

    # -- request handling -----------------------------------------------------

    def handle(self, method: str, path: str, headers: dict, body: bytes = b"") -> tuple[int, object]:
        try:
            return self._route(method, path.split("?", 1)[0].rstrip("/"), headers, body)
        except ProtocolViolation as exc:
            return 409, {"error": "protocol_violation", "detail": str(exc)}
        except SequenceExhausted as exc:
            return 410, {"error": "sequence_exhausted", "detail": str(exc)}
        except Exception:  # pragma: no cover - reported, never swallowed silently
            log.exception("unhandled error for %s %s", method, path)
            return 500, {"error": "internal"}

    def _auth(self, headers: dict):
        key = None
        for name, value in headers.items():
            if name.lower() == "x-api-key":
                key = value
        cred = self._creds.get(key) if key else None
        if cred is None:
            return None, (401, {"error": "unauthorized"})
        if not self._buckets[cred.key].allow():
            return None, (429, {"error": "rate_limited"})
        return self._sessions[cred.participant_id], None

    def _route(self, method, path, headers, body):
        routes = {
            "/v1/source": ("GET", self._get_source),
            "/v1/translation": ("POST", self._post_translation),
            "/v1/status": ("GET", self._get_status),
        }
        if path == "/v1/leaderboard":
            if method != "GET":
                return 405, {"error": "method_not_allowed"}
            return 200, self.leaderboard()
        if path not in routes:
            return 404, {"error": "not_found"}
        want, fn = routes[path]
        if method != want:
            return 405, {"error": "method_not_allowed"}
        session, err = self._auth(headers)
        if err:
            return err
        return fn(session, body)

    def _get_source(self, session, body):
        return 200, self.env.next_source(session).to_wire()

    def _post_translation(self, session, body):
        try:
            payload = json.loads(body.decode("utf-8") or "null")
        except (UnicodeDecodeError, json.JSONDecodeError):
            return 400, {"error": "bad_request", "detail": "body is not JSON"}
        if not isinstance(payload, dict):
            return 400, {"error": "bad_request", "detail": "body must be an object"}
        instance_id = payload.get("instance_id")
        tokens = payload.get("tokens")
        if not isinstance(instance_id, str) or not isinstance(tokens, list) \
                or not all(isinstance(t, str) for t in tokens):
            return 400, {"error": "bad_request", "detail": "need instance_id: str and tokens: [str]"}
        k = session.cursor
        reward = self.env.submit_translation(session, instance_id, tokens)
        return 200, {"round": k, "reward": reward}

    def _get_status(self, session, body):
        return 200, self.status(session)

    def status(self, session: ParticipantSession) -> dict:
        with session.lock:
            issued = self.env.issued_message(session)
            last = session.round_logs[-1] if session.round_logs else None
            return {
                "participant_id": session.participant_id,
                "state": session.state.value,
                "rounds_completed": session.cursor,
                "total_rounds": session.total_rounds,
                "cumulative_reward": session.cumulative_reward,
                "last_round": None if last is None else last.round,
                "last_reward": None if last is None else last.reward,
                "issued": None if issued is None else issued.to_wire(),
                "seconds_since_issue": None if session.issued_at is None
                else max(0.0, self.clock() - session.issued_at),
            }

    def leaderboard(self) -> list[dict]:
        entries = []
        for pid, session in list(self._sessions.items()):
            logs = list(session.round_logs)  # snapshot; may lag an in-flight round
            cumulative = 0.0
            for entry in logs:
                cumulative += entry.reward
            ck = self._last_checkpoint(pid, logs)
            entries.append({
                "participant_id": pid,
                "rounds_completed": len(logs),
                "cumulative_reward": cumulative,
                "running_mean_reward": cumulative / len(logs) if logs else 0.0,
                "last_checkpoint_corpus_bleu": None if ck is None else ck.corpus_bleu,
                "last_checkpoint_avg_sentence_bleu": None if ck is None else ck.avg_sentence_bleu,
            })
        entries.sort(key=lambda e: (-e["cumulative_reward"], e["participant_id"]))
        return entries

    def _last_checkpoint(self, pid, logs):
        done = [b for b in self.env.plan.blocks if b[0] + b[1] <= len(logs)]
        if not done:
            return None
        cached = self._board_cache.get(pid)
        if cached and cached[0] == len(done):
            return cached[1]
        start, length = done[-1]
        sub = SequencePlan(self.env.plan.ids, ((start, length),))
        ck = checkpoint_eval(logs[start:start + length], sub, self.references)[0]
        self._board_cache[pid] = (len(done), ck)
        return ck


# -- HTTP transport ---------------------------------------------------------------

def _make_handler(app: ArenaService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def setup(self):
            super().setup()
            # headers and body go out in separate writes; without this, keep-alive
            # connections stall on delayed ACKs
            self.connection.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

        def _dispatch(self, method):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            status, payload = app.handle(method, self.path, dict(self.headers.items()), body)
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_PUT(self):
            self._dispatch("PUT")

        def do_DELETE(self):
            self._dispatch("DELETE")

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

    return Handler


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True


def make_server(app: ArenaService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    return _Server((host, port), _make_handler(app))


class BackgroundServer:
    """Run a server on a daemon thread; ``url`` is valid once started."""

    def __init__(self, app: ArenaService, host: str = "127.0.0.1", port: int = 0):
        self.app = app
        self.httpd = make_server(app, host, port)
        self.thread = threading.Thread(target=self.httpd.serve_forever, kwargs={"poll_interval": 0.05},
                                       daemon=True)

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()
        self.app.close()


__all__ = [
    "ApiCredential", "ArenaService", "BackgroundServer", "ConfigError", "CorruptLog",
    "TokenBucket", "make_server", "load_credentials", "save_credentials", "STATE_DIR_ENV",
]
