"""HTTP session service for live training.

Serves one email per trial under the 10/40/10 protocol, traces the
trainee's responses into a learner model, and uses that model to pick
the next training email. Every state change is appended to a per-session
JSONL event log before it takes effect, so a crashed service replays its
logs back to the identical in-memory state.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .analysis import improvement_stats, phishing_rate
from .corpus import (
    CONDITIONS,
    EmailRecord,
    condition_name,
    condition_subset,
    load_corpus,
)
from .embeddings import EmbeddingSimilarity, load_embeddings
from .ibl import IBLParams, MemoryStore, EMAIL_OPTIONS
from .selection import (
    PolicyKind,
    SelectionPolicy,
    incorrect_option,
    next_email_ibl,
)
from .simulation import ProtocolConfig

DEFAULT_ACTIONS = ("reply", "click link", "delete", "report", "ignore")

EVENT_CREATED = "CREATED"
EVENT_EMAIL_SERVED = "EMAIL_SERVED"
EVENT_RESPONSE = "RESPONSE"
EVENT_QUESTIONNAIRE = "QUESTIONNAIRE"
EVENT_COMPLETED = "COMPLETED"

BLOCK_PRE = "PRE"
BLOCK_TRAIN = "TRAIN"
BLOCK_POST = "POST"


class ServiceError(Exception):
    """Service-level error carrying an HTTP status and a stable code."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass(frozen=True)
class ServiceConfig:
    """Runtime configuration, loadable from a JSON file with env overrides."""

    corpus_path: str
    embeddings_path: str
    data_dir: str
    host: str = "127.0.0.1"
    port: int = 8000
    actions: Tuple[str, ...] = DEFAULT_ACTIONS
    static_dir: Optional[str] = None

    ENV_PREFIX = "PHISHTRAIN_"

    @classmethod
    def load(cls, path: Optional[str] = None, env: Optional[Dict[str, str]] = None) -> "ServiceConfig":
        raw: Dict[str, Any] = {}
        if path is not None:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        env = dict(os.environ if env is None else env)
        for key in ("corpus_path", "embeddings_path", "data_dir", "host", "port", "static_dir"):
            env_key = cls.ENV_PREFIX + key.upper()
            if env_key in env:
                raw[key] = env[env_key]
        if "port" in raw:
            raw["port"] = int(raw["port"])
        if "actions" in raw:
            raw["actions"] = tuple(raw["actions"])
        missing = [k for k in ("corpus_path", "embeddings_path", "data_dir") if k not in raw]
        if missing:
            raise ServiceError(500, "config_missing", f"missing config keys: {', '.join(missing)}")
        return cls(**raw)


_SCRIPT_RE = re.compile(r"<\s*script\b.*?(?:<\s*/\s*script\s*>|$)", re.IGNORECASE | re.DOTALL)
_DANGEROUS_TAG_RE = re.compile(
    r"<\s*/?\s*(?:iframe|object|embed|link|meta|base|applet)\b[^>]*>", re.IGNORECASE
)
_ON_ATTR_RE = re.compile(r"\s+on[a-z]+\s*=\s*(?:\"[^\"]*\"|'[^']*'|[^\s>]+)", re.IGNORECASE)
_FORM_ACTION_RE = re.compile(r"(<\s*form\b[^>]*?)\s+action\s*=\s*(?:\"[^\"]*\"|'[^']*'|[^\s>]+)", re.IGNORECASE)
_EXTERNAL_ATTR_RE = re.compile(
    r"\s+(?:src|href|srcset|background|poster|data)\s*=\s*(?:\"(?:https?:|//)[^\"]*\"|'(?:https?:|//)[^']*'|(?:https?:|//)[^\s>]+)",
    re.IGNORECASE,
)
_JS_URL_ATTR_RE = re.compile(
    r"\s+(?:src|href)\s*=\s*(?:\"\s*javascript:[^\"]*\"|'\s*javascript:[^']*'|javascript:[^\s>]+)",
    re.IGNORECASE,
)


def sanitize_markup(markup: str) -> str:
    """Strip scripts, external resource loads, and form actions from markup.

    Defense for displaying arbitrary styled email bodies: script blocks,
    event-handler attributes, javascript: URLs, external src/href values,
    and embedding tags are removed. Inline styling is preserved.
    """
    out = _SCRIPT_RE.sub("", markup)
    out = _DANGEROUS_TAG_RE.sub("", out)
    out = _ON_ATTR_RE.sub("", out)
    out = _JS_URL_ATTR_RE.sub("", out)
    out = _EXTERNAL_ATTR_RE.sub("", out)
    out = _FORM_ACTION_RE.sub(r"\1", out)
    return out


@dataclass
class Session:
    """Live training session: protocol position plus the traced learner model."""

    session_id: str
    condition: str
    policy: SelectionPolicy
    seed: int
    protocol: ProtocolConfig
    memory: MemoryStore
    pre_ids: List[str]
    post_ids: List[str]
    unseen: List[str]
    created_at: float
    updated_at: float
    trial: int = 0  # last served trial index, 1-based; 0 = nothing served
    pending_email_id: Optional[str] = None
    trial_log: List[Dict[str, Any]] = field(default_factory=list)
    cumulative_points: int = 0
    questionnaire: Optional[List[float]] = None
    questionnaire_score: Optional[float] = None
    completed: bool = False
    seq: int = 0

    def block_of(self, trial: int) -> str:
        p = self.protocol
        if trial <= p.n_pre:
            return BLOCK_PRE
        if trial <= p.n_pre + p.n_train:
            return BLOCK_TRAIN
        return BLOCK_POST

    def state_dict(self) -> Dict[str, Any]:
        """Canonical serializable state, used for replay equality checks."""
        return {
            "session_id": self.session_id,
            "condition": self.condition,
            "policy": self.policy.to_dict(),
            "seed": self.seed,
            "protocol": asdict(self.protocol),
            "memory": self.memory.to_json(),
            "pre_ids": list(self.pre_ids),
            "post_ids": list(self.post_ids),
            "unseen": list(self.unseen),
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "trial": self.trial,
            "pending_email_id": self.pending_email_id,
            "trial_log": list(self.trial_log),
            "cumulative_points": self.cumulative_points,
            "questionnaire": self.questionnaire,
            "questionnaire_score": self.questionnaire_score,
            "completed": self.completed,
            "seq": self.seq,
        }

    def state_bytes(self) -> bytes:
        return json.dumps(self.state_dict(), sort_keys=True, separators=(",", ":")).encode()


class SessionManager:
    """Owns all sessions, their locks, and their append-only event logs."""

    def __init__(
        self,
        records: List[EmailRecord],
        similarity: EmbeddingSimilarity,
        data_dir: str,
        actions: Tuple[str, ...] = DEFAULT_ACTIONS,
        params: Optional[IBLParams] = None,
        protocol: Optional[ProtocolConfig] = None,
    ) -> None:
        self._records = {r.id: r for r in records}
        self._by_condition: Dict[str, List[EmailRecord]] = {}
        for author, style in CONDITIONS:
            try:
                subset = condition_subset(records, author, style)
            except ValueError:
                continue
            self._by_condition[condition_name(author, style)] = subset
        self._similarity = similarity
        self._data_dir = data_dir
        self._actions = tuple(actions)
        self._params = params if params is not None else IBLParams()
        self._protocol = protocol if protocol is not None else ProtocolConfig()
        self._sessions: Dict[str, Session] = {}
        self._locks: Dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        os.makedirs(self._session_dir, exist_ok=True)
        self._load_existing()

    @property
    def _session_dir(self) -> str:
        return os.path.join(self._data_dir, "sessions")

    @property
    def actions(self) -> Tuple[str, ...]:
        return self._actions

    @property
    def conditions(self) -> List[str]:
        return sorted(self._by_condition)

    def _log_path(self, session_id: str) -> str:
        return os.path.join(self._session_dir, f"{session_id}.jsonl")

    def _load_existing(self) -> None:
        for name in sorted(os.listdir(self._session_dir)):
            if not name.endswith(".jsonl"):
                continue
            session = self.replay(os.path.join(self._session_dir, name))
            self._sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            lock = self._locks.get(session_id)
            if lock is None:
                raise ServiceError(404, "session_not_found", f"unknown session {session_id!r}")
            return lock

    def _get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "session_not_found", f"unknown session {session_id!r}")
        return session

    def _append_event(self, session: Session, kind: str, payload: Dict[str, Any]) -> None:
        """Write-ahead append: the event is durable before state changes."""
        session.seq += 1
        event = {"seq": session.seq, "kind": kind, "payload": payload}
        line = json.dumps(event, sort_keys=True, separators=(",", ":"))
        with open(self._log_path(session.session_id), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- session construction ------------------------------------------------

    def _draws(self, seed: int, pool_ids: List[str], protocol: ProtocolConfig) -> Tuple[List[str], List[str]]:
        rng = np.random.default_rng([seed, 0])
        n_fixed = protocol.n_pre + protocol.n_post
        fixed = rng.choice(len(pool_ids), size=n_fixed, replace=False)
        pre = [pool_ids[i] for i in fixed[: protocol.n_pre]]
        post = [pool_ids[i] for i in fixed[protocol.n_pre:]]
        return pre, post

    def create_session(self, condition: str, policy: SelectionPolicy, seed: int) -> Session:
        subset = self._by_condition.get(condition)
        if subset is None:
            raise ServiceError(400, "unknown_condition", f"unknown condition {condition!r}")
        protocol = self._protocol
        if len(subset) < protocol.n_total:
            raise ServiceError(
                400,
                "pool_too_small",
                f"condition {condition!r} has {len(subset)} emails; "
                f"{protocol.n_total} required",
            )
        session_id = uuid.uuid4().hex
        now = time.time()
        payload = {
            "session_id": session_id,
            "condition": condition,
            "policy": policy.to_dict(),
            "seed": int(seed),
            "protocol": asdict(protocol),
            "created_at": now,
        }
        session = self._build_session(payload)
        with self._registry_lock:
            self._sessions[session_id] = session
            self._locks[session_id] = threading.Lock()
        self._append_event(session, EVENT_CREATED, payload)
        return session

    def _build_session(self, payload: Dict[str, Any]) -> Session:
        condition = payload["condition"]
        protocol = ProtocolConfig(**payload["protocol"])
        subset = self._by_condition[condition]
        pool_ids = [r.id for r in subset.emails]
        pre_ids, post_ids = self._draws(payload["seed"], pool_ids, protocol)
        fixed = set(pre_ids) | set(post_ids)
        unseen = [i for i in pool_ids if i not in fixed]
        memory = MemoryStore(
            options=EMAIL_OPTIONS,
            params=self._params,
            seed=payload["seed"] + 1,
            similarity=self._similarity,
        )
        return Session(
            session_id=payload["session_id"],
            condition=condition,
            policy=SelectionPolicy.from_dict(payload["policy"]),
            seed=payload["seed"],
            protocol=protocol,
            memory=memory,
            pre_ids=pre_ids,
            post_ids=post_ids,
            unseen=unseen,
            created_at=payload["created_at"],
            updated_at=payload["created_at"],
        )

    # -- trial flow ----------------------------------------------------------

    def _select_email(self, session: Session, trial: int) -> str:
        block = session.block_of(trial)
        if block == BLOCK_PRE:
            return session.pre_ids[trial - 1]
        if block == BLOCK_POST:
            return session.post_ids[trial - session.protocol.n_pre - session.protocol.n_train - 1]
        unseen = [self._records[i] for i in session.unseen]
        if session.policy.kind is PolicyKind.IBL_SELECTION:
            email, _scores = next_email_ibl(session.memory, unseen, remove=False)
            return email.id
        rng = np.random.default_rng([session.seed, trial])
        return session.unseen[int(rng.integers(len(session.unseen)))]

    def next_trial(self, session_id: str) -> Dict[str, Any]:
        with self._lock_for(session_id):
            session = self._get(session_id)
            if session.completed:
                raise ServiceError(409, "session_complete", "session already completed")
            if session.pending_email_id is not None:
                raise ServiceError(
                    409, "trial_pending", f"trial {session.trial} has not been answered"
                )
            trial = session.trial + 1
            if trial > session.protocol.n_total:
                raise ServiceError(409, "session_complete", "all trials served")
            email_id = self._select_email(session, trial)
            self._append_event(
                session,
                EVENT_EMAIL_SERVED,
                {"trial": trial, "block": session.block_of(trial), "email_id": email_id},
            )
            self._apply_served(session, trial, email_id)
            return self._trial_payload(session)

    def _apply_served(self, session: Session, trial: int, email_id: str) -> None:
        session.trial = trial
        session.pending_email_id = email_id
        if session.block_of(trial) == BLOCK_TRAIN:
            session.unseen = [i for i in session.unseen if i != email_id]

    def _trial_payload(self, session: Session) -> Dict[str, Any]:
        record = self._records[session.pending_email_id]
        email: Dict[str, Any] = {
            "id": record.id,
            "subject": record.subject,
            "sender": record.sender,
            "body_plain": record.body_plain,
        }
        if record.body_markup is not None:
            email["body_markup"] = sanitize_markup(record.body_markup)
        return {
            "trial": session.trial,
            "block": session.block_of(session.trial),
            "total_trials": session.protocol.n_total,
            "email": email,
        }

    def submit_response(
        self,
        session_id: str,
        trial: int,
        classification: str,
        confidence: int,
        action: str,
    ) -> Dict[str, Any]:
        with self._lock_for(session_id):
            session = self._get(session_id)
            if classification not in EMAIL_OPTIONS:
                raise ServiceError(400, "invalid_classification", f"unknown option {classification!r}")
            if not isinstance(confidence, int) or not 1 <= confidence <= 5:
                raise ServiceError(400, "invalid_confidence", "confidence must be an integer in [1, 5]")
            if action not in self._actions:
                raise ServiceError(400, "invalid_action", f"unknown action {action!r}")
            if session.pending_email_id is None:
                raise ServiceError(409, "duplicate_submission", "no trial awaiting a response")
            if trial != session.trial:
                raise ServiceError(
                    409, "trial_mismatch", f"expected trial {session.trial}, got {trial}"
                )
            record = self._records[session.pending_email_id]
            block = session.block_of(trial)
            correct = classification == record.label
            points = None
            if block == BLOCK_TRAIN:
                points = (
                    session.protocol.reward_correct if correct else session.protocol.reward_incorrect
                )
            payload = {
                "trial": trial,
                "block": block,
                "email_id": record.id,
                "classification": classification,
                "confidence": confidence,
                "action": action,
                "correct": correct,
                "points": points,
                "ts": time.time(),
            }
            self._append_event(session, EVENT_RESPONSE, payload)
            self._apply_response(session, payload)
            if session.trial == session.protocol.n_total:
                self._append_event(session, EVENT_COMPLETED, {"ts": payload["ts"]})
                session.completed = True
            feedback = None
            if block == BLOCK_TRAIN:
                feedback = {"correct": correct, "points": points}
            return {
                "trial": trial,
                "block": block,
                "feedback": feedback,
                "cumulative_points": session.cumulative_points,
                "completed": session.completed,
            }

    def _apply_response(self, session: Session, payload: Dict[str, Any]) -> None:
        record = self._records[payload["email_id"]]
        block = payload["block"]
        if block == BLOCK_TRAIN:
            utility = float(payload["points"])
            session.memory.record_outcome(
                option=payload["classification"],
                attributes=(record.id,),
                utility=utility,
            )
            session.cumulative_points += payload["points"]
        else:
            session.memory.advance_time()
        session.trial_log.append(dict(payload))
        session.pending_email_id = None
        session.updated_at = payload["ts"]

    def submit_questionnaire(self, session_id: str, values: List[float]) -> Dict[str, Any]:
        with self._lock_for(session_id):
            session = self._get(session_id)
            if not session.completed:
                raise ServiceError(409, "session_incomplete", "all trials must be answered first")
            if session.questionnaire is not None:
                raise ServiceError(409, "duplicate_submission", "questionnaire already submitted")
            if len(values) != 4 or any(
                not isinstance(v, (int, float)) or not 0 <= v <= 100 for v in values
            ):
                raise ServiceError(400, "invalid_questionnaire", "need four values in [0, 100]")
            vals = [float(v) for v in values]
            score = sum(vals) / len(vals)
            payload = {"values": vals, "score": score, "ts": time.time()}
            self._append_event(session, EVENT_QUESTIONNAIRE, payload)
            self._apply_questionnaire(session, payload)
            return {"score": score}

    def _apply_questionnaire(self, session: Session, payload: Dict[str, Any]) -> None:
        session.questionnaire = list(payload["values"])
        session.questionnaire_score = payload["score"]
        session.updated_at = payload["ts"]

    def session_summary(self, session_id: str) -> Dict[str, Any]:
        with self._lock_for(session_id):
            session = self._get(session_id)
            if not session.completed:
                raise ServiceError(409, "session_incomplete", "session has unanswered trials")
            trials = [_TrialView(t, self._records, session.protocol) for t in session.trial_log]
            stats = improvement_stats(trials)
            return {
                "session_id": session.session_id,
                "condition": session.condition,
                "policy": session.policy.to_dict(),
                "improvement": {
                    "pre_accuracy": stats.overall.pre,
                    "post_accuracy": stats.overall.post,
                    "delta_pp": stats.overall.delta * 100.0,
                },
                "phishing_rate": phishing_rate(trials),
                "cumulative_points": session.cumulative_points,
                "questionnaire_score": session.questionnaire_score,
                "trial_log": [dict(t) for t in session.trial_log],
            }

    # -- replay --------------------------------------------------------------

    def replay(self, log_path: str) -> Session:
        """Rebuild a session by applying its event log in order."""
        session: Optional[Session] = None
        expected_seq = 0
        with open(log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                expected_seq += 1
                if event["seq"] != expected_seq:
                    raise ServiceError(
                        500,
                        "corrupt_log",
                        f"sequence gap in {log_path}: expected {expected_seq}, got {event['seq']}",
                    )
                kind, payload = event["kind"], event["payload"]
                if kind == EVENT_CREATED:
                    session = self._build_session(payload)
                elif session is None:
                    raise ServiceError(500, "corrupt_log", f"{log_path} does not start with creation")
                elif kind == EVENT_EMAIL_SERVED:
                    self._apply_served(session, payload["trial"], payload["email_id"])
                elif kind == EVENT_RESPONSE:
                    self._apply_response(session, payload)
                elif kind == EVENT_QUESTIONNAIRE:
                    self._apply_questionnaire(session, payload)
                elif kind == EVENT_COMPLETED:
                    session.completed = True
                else:
                    raise ServiceError(500, "corrupt_log", f"unknown event kind {kind!r}")
        if session is None:
            raise ServiceError(500, "corrupt_log", f"{log_path} is empty")
        session.seq = expected_seq
        return session


class _TrialView:
    """Adapter giving trial-log dicts the attribute shape analysis expects."""

    def __init__(self, payload: Dict[str, Any], records: Dict[str, EmailRecord], protocol: ProtocolConfig) -> None:
        self.block = payload["block"].lower()
        self.true_label = records[payload["email_id"]].label
        self.response = payload["classification"]
        self.correct = payload["correct"]


def create_app(config: ServiceConfig, manager: Optional[SessionManager] = None):
    """Build the HTTP application around a SessionManager."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    if manager is None:
        records = load_corpus(config.corpus_path)
        table = load_embeddings(config.embeddings_path)
        table.validate_ids([r.id for r in records])
        manager = SessionManager(
            records,
            EmbeddingSimilarity(table),
            config.data_dir,
            actions=config.actions,
        )

    app = FastAPI(title="phishtrain service")
    app.state.manager = manager

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.get("/healthz")
    def healthz() -> Dict[str, Any]:
        return {"status": "ok", "conditions": manager.conditions, "actions": list(manager.actions)}

    @app.post("/sessions")
    def create_session(body: Dict[str, Any]) -> Dict[str, Any]:
        try:
            condition = body["condition"]
            policy = SelectionPolicy.from_dict(body.get("policy", {"policy": "random"}))
            seed = int(body.get("seed", 0))
        except (KeyError, ValueError, TypeError) as exc:
            raise ServiceError(400, "invalid_request", str(exc))
        session = manager.create_session(condition, policy, seed)
        return {
            "session_id": session.session_id,
            "condition": session.condition,
            "block": BLOCK_PRE,
            "trial": 1,
            "total_trials": session.protocol.n_total,
            "actions": list(manager.actions),
        }

    @app.get("/sessions/{session_id}/next")
    def next_trial(session_id: str) -> Dict[str, Any]:
        return manager.next_trial(session_id)

    @app.post("/sessions/{session_id}/response")
    def submit_response(session_id: str, body: Dict[str, Any]) -> Dict[str, Any]:
        try:
            trial = int(body["trial"])
            classification = body["classification"]
            confidence = body["confidence"]
            action = body["action"]
        except (KeyError, ValueError, TypeError) as exc:
            raise ServiceError(400, "invalid_request", str(exc))
        return manager.submit_response(session_id, trial, classification, confidence, action)

    @app.post("/sessions/{session_id}/questionnaire")
    def submit_questionnaire(session_id: str, body: Dict[str, Any]) -> Dict[str, Any]:
        values = body.get("values")
        if not isinstance(values, list):
            raise ServiceError(400, "invalid_request", "body must contain a `values` list")
        return manager.submit_questionnaire(session_id, values)

    @app.get("/sessions/{session_id}/summary")
    def session_summary(session_id: str) -> Dict[str, Any]:
        return manager.session_summary(session_id)

    if config.static_dir is not None and os.path.isdir(config.static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="ui")

    return app
