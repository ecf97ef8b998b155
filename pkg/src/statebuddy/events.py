"""Session events and the append-only event log.

One event per line, canonical UTF-8 JSON, file named
``<session_id>.events.jsonl``. The log is the source of truth: a session's
final snapshot can be reconstructed from it (see replay_snapshot).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import StatebuddyError


class EventType(str, Enum):
    SESSION_STARTED = "session_started"
    STATE_ENTERED = "state_entered"
    TRANSITION_FIRED = "transition_fired"
    JUMP_STARTED = "jump_started"
    JUMP_RETURNED = "jump_returned"
    WORKFLOW_CALLED = "workflow_called"
    WORKFLOW_RETURNED = "workflow_returned"
    ACTION_STARTED = "action_started"
    ACTION_COMPLETED = "action_completed"
    ACTION_FAILED = "action_failed"
    INTENT_MATCHED = "intent_matched"
    INTENT_REJECTED = "intent_rejected"
    AUTOPILOT_TOGGLED = "autopilot_toggled"
    AUTOPILOT_PAUSED = "autopilot_paused"
    SESSION_ENDED = "session_ended"


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    timestamp: int  # milliseconds since epoch (injectable clock)
    session_id: str
    type: EventType
    payload: Mapping[str, Any]

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "session_id": self.session_id,
            "type": self.type.value,
            "payload": dict(self.payload),
        }


def event_to_json(event: SessionEvent) -> str:
    """Canonical single-line encoding; identical events encode byte-identically."""
    return json.dumps(event.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def event_from_dict(doc: Mapping[str, Any]) -> SessionEvent:
    return SessionEvent(
        seq=int(doc["seq"]),
        timestamp=int(doc["timestamp"]),
        session_id=str(doc["session_id"]),
        type=EventType(doc["type"]),
        payload=dict(doc.get("payload", {})),
    )


class EventLogError(StatebuddyError):
    pass


class EventLogWriter:
    """Append-only writer, flushed per event so logs survive hard exits."""

    def __init__(self, path):
        self.path = str(path)
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, event: SessionEvent) -> None:
        self._fh.write(event_to_json(event) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __call__(self, event: SessionEvent) -> None:
        self.append(event)


def log_path(directory, session_id: str) -> str:
    return os.path.join(str(directory), f"{session_id}.events.jsonl")


def read_event_log(path) -> list[SessionEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(event_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise EventLogError(f"{path}:{lineno}: bad event record: {e}") from e
    return events


def check_sequence(events: Iterable[SessionEvent]) -> None:
    """Seq must be 1..N, strictly increasing, no gaps."""
    expected = 1
    for e in events:
        if e.seq != expected:
            raise EventLogError(f"event seq {e.seq} where {expected} expected")
        expected += 1


def replay_snapshot(events: Iterable[SessionEvent]) -> dict:
    """Reconstruct the session snapshot a live engine would report after
    emitting exactly these events."""
    stack: list[dict] = []
    snapshot: dict[str, Any] = {
        "session_id": None,
        "stack": stack,
        "jump_return": None,
        "autopilot_enabled": False,
        "cursor_speed": 0.0,
        "seq": 0,
        "ended": False,
    }
    for e in events:
        snapshot["seq"] = e.seq
        snapshot["session_id"] = e.session_id
        p = e.payload
        if e.type is EventType.SESSION_STARTED:
            snapshot["cursor_speed"] = float(p.get("cursor_speed", 0.0))
            stack.append({"workflow_id": p["workflow"], "state_id": p["initial_state"], "resume": None})
        elif e.type is EventType.STATE_ENTERED:
            stack[-1]["state_id"] = p["state"]
        elif e.type is EventType.WORKFLOW_CALLED:
            stack[-1]["resume"] = p["parent_resume"]
            stack.append({"workflow_id": p["workflow"], "state_id": p["initial_state"], "resume": None})
        elif e.type is EventType.WORKFLOW_RETURNED:
            stack.pop()
            stack[-1]["resume"] = None
        elif e.type is EventType.JUMP_STARTED:
            snapshot["jump_return"] = [p["depth"] - 1, p["origin_state"]]
        elif e.type is EventType.JUMP_RETURNED:
            snapshot["jump_return"] = None
        elif e.type is EventType.AUTOPILOT_TOGGLED:
            snapshot["autopilot_enabled"] = bool(p["enabled"])
        elif e.type is EventType.SESSION_ENDED:
            snapshot["ended"] = True
    return snapshot
