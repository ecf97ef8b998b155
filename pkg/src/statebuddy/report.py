"""Timing report aggregated from a session's event log.

Summarizes where time went (per-state dwell, per-action-kind durations) and
what the operator did (commands matched/rejected, transitions fired). Values
are measured from the log's timestamps only.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Sequence

from .events import EventType, SessionEvent


def build_report(events: Sequence[SessionEvent]) -> dict:
    if not events:
        return {"session_id": None, "total_ms": 0, "states": [], "actions": {}, "commands": {}}
    started = events[0].timestamp
    finished = events[-1].timestamp

    state_dwell: dict[str, float] = defaultdict(float)
    state_visits: dict[str, int] = defaultdict(int)
    state_order: list[str] = []
    current_state: str | None = None
    entered_at = started

    action_totals: dict[str, dict] = {}
    transitions = 0
    matched = 0
    rejected = 0
    ended = False

    for e in events:
        if e.type is EventType.STATE_ENTERED:
            if current_state is not None:
                state_dwell[current_state] += e.timestamp - entered_at
            current_state = e.payload["state"]
            if current_state not in state_visits:
                state_order.append(current_state)
            state_visits[current_state] += 1
            entered_at = e.timestamp
        elif e.type is EventType.TRANSITION_FIRED:
            transitions += 1
        elif e.type in (EventType.ACTION_COMPLETED, EventType.ACTION_FAILED):
            kind = e.payload.get("kind", "unknown")
            bucket = action_totals.setdefault(kind, {"count": 0, "total_ms": 0.0, "failed": 0})
            bucket["count"] += 1
            bucket["total_ms"] += float(e.payload.get("duration_ms", 0.0))
            if e.type is EventType.ACTION_FAILED:
                bucket["failed"] += 1
        elif e.type is EventType.INTENT_MATCHED:
            matched += 1
        elif e.type is EventType.INTENT_REJECTED:
            rejected += 1
        elif e.type is EventType.SESSION_ENDED:
            ended = True

    if current_state is not None:
        state_dwell[current_state] += finished - entered_at

    return {
        "session_id": events[0].session_id,
        "started_at": started,
        "finished_at": finished,
        "total_ms": finished - started,
        "ended": ended,
        "states": [
            {"state": s, "visits": state_visits[s], "dwell_ms": state_dwell[s]}
            for s in state_order
        ],
        "actions": action_totals,
        "transitions_fired": transitions,
        "commands": {"matched": matched, "rejected": rejected},
    }
