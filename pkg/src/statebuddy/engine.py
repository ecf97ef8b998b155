"""Workflow session execution.

A session owns a stack of frames (workflow id + active state). Regular
transitions run their guard, their actions, then enter the destination.
Jump triggers run their actions and return control to the originating
state. A call_workflow action suspends the running action list, pushes the
child workflow, and resumes (remaining actions, then completion) when the
child reaches a terminal state. Autopilot repeatedly fires each state's
default transition until a terminal state, a confirmation point, a failure,
or the step limit.

All mutations of one session are serialized through a per-session lock;
distinct sessions are independent. Every observable change is emitted as a
SessionEvent with a gapless per-session sequence number.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

from .errors import StatebuddyError
from .events import EventType, SessionEvent
from .executors import ExecutionContext, ExecutorRegistry, ExecutionStatus
from .model import ActionKind, ActionSpec, WorkflowDefinition, admissible_triggers

Clock = Callable[[], int]
Sleeper = Callable[[float], None]


def _real_clock() -> int:
    return int(time.time() * 1000)


def _real_sleeper(ms: float) -> None:
    if ms > 0:
        time.sleep(ms / 1000.0)


class EngineError(StatebuddyError):
    pass


class InadmissibleTransition(EngineError):
    pass


class GuardFailed(EngineError):
    pass


class ActionFailed(EngineError):
    pass


class CallDepthExceeded(EngineError):
    pass


class ExecutorUnavailable(EngineError):
    pass


class AutopilotStepLimit(EngineError):
    pass


class SessionEnded(EngineError):
    pass


# ---------------------------------------------------------------------------
# Global commands
# ---------------------------------------------------------------------------

class GlobalBehavior(str, Enum):
    AUTOPILOT_ON = "autopilot_on"
    AUTOPILOT_OFF = "autopilot_off"
    HELP = "help"
    NEXT_SLIDE = "next_slide"
    PREVIOUS_SLIDE = "previous_slide"
    OK = "ok"
    SKIP_MODE = "skip_mode"
    DETAIL_MODE = "detail_mode"


@dataclass(frozen=True)
class GlobalCommandSet:
    """State-independent commands, always admissible."""

    entries: tuple[tuple[str, GlobalBehavior], ...]

    def __post_init__(self):
        triggers = [t for t, _ in self.entries]
        if len(triggers) != len(set(triggers)):
            raise ValueError("global command triggers must be unique")

    @property
    def triggers(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.entries)

    def behavior(self, trigger: str) -> GlobalBehavior | None:
        for t, b in self.entries:
            if t == trigger:
                return b
        return None


DEFAULT_GLOBALS = GlobalCommandSet(
    entries=(
        ("AutoPilotOn", GlobalBehavior.AUTOPILOT_ON),
        ("AutoPilotOff", GlobalBehavior.AUTOPILOT_OFF),
        ("Help", GlobalBehavior.HELP),
        ("NextSlide", GlobalBehavior.NEXT_SLIDE),
        ("PreviousSlide", GlobalBehavior.PREVIOUS_SLIDE),
        ("Ok", GlobalBehavior.OK),
        ("Skip", GlobalBehavior.SKIP_MODE),
        ("Detail", GlobalBehavior.DETAIL_MODE),
    )
)


# ---------------------------------------------------------------------------
# Session state
# ---------------------------------------------------------------------------

@dataclass
class Resume:
    """Continuation for an action list suspended by call_workflow."""

    kind: str  # transition | jump
    trigger: str
    destination: str  # transition: destination state; jump: originating state
    remaining: tuple[ActionSpec, ...]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "trigger": self.trigger,
            "destination": self.destination,
            "remaining": [a.to_dict() for a in self.remaining],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Resume":
        return cls(
            kind=doc["kind"],
            trigger=doc["trigger"],
            destination=doc["destination"],
            remaining=tuple(
                ActionSpec(ActionKind(a["kind"]), a.get("target", ""), dict(a.get("params", {})))
                for a in doc["remaining"]
            ),
        )


@dataclass
class Frame:
    workflow_id: str
    state_id: str
    resume: Resume | None = None


@dataclass
class SessionState:
    session_id: str
    stack: list[Frame]
    jump_return: tuple[int, str] | None = None
    autopilot_enabled: bool = False
    cursor_speed: float = 0.0  # milliseconds per action step
    seq: int = 0


@dataclass(frozen=True)
class EngineConfig:
    max_call_depth: int = 16
    max_autopilot_steps: int = 1000
    cursor_speed: float = 0.0
    clock: Clock = _real_clock
    sleeper: Sleeper = _real_sleeper

    def __post_init__(self):
        if self.cursor_speed < 0:
            raise ValueError("cursor_speed must be >= 0")
        if self.max_call_depth < 1:
            raise ValueError("max_call_depth must be >= 1")


@dataclass(frozen=True)
class AutopilotRun:
    halt: str  # terminal | paused | disabled
    steps: int


class Session:
    """One live workflow session. Use Session.start() or Session.restore()."""

    def __init__(
        self,
        catalog: Mapping[str, WorkflowDefinition],
        registry: ExecutorRegistry,
        config: EngineConfig,
        session_id: str,
        sink: Callable[[SessionEvent], None] | None = None,
        globals_: GlobalCommandSet = DEFAULT_GLOBALS,
    ):
        self.catalog = dict(catalog)
        self.registry = registry
        self.config = config
        self.globals = globals_
        self.sink = sink
        self.events: list[SessionEvent] = []
        self.ended = False
        self.state = SessionState(session_id=session_id, stack=[], cursor_speed=config.cursor_speed)
        self._lock = threading.RLock()

    # -- construction -------------------------------------------------------

    @classmethod
    def start(
        cls,
        workflow: WorkflowDefinition,
        *,
        catalog: Mapping[str, WorkflowDefinition] | None = None,
        registry: ExecutorRegistry | None = None,
        config: EngineConfig | None = None,
        session_id: str | None = None,
        sink: Callable[[SessionEvent], None] | None = None,
        globals_: GlobalCommandSet = DEFAULT_GLOBALS,
    ) -> "Session":
        """Start a session at the workflow's initial state, dispatching its
        entry actions. Raises ExecutorUnavailable if any action kind used by
        the workflow (or a workflow it can call) has no registered executor."""
        catalog = dict(catalog or {})
        catalog.setdefault(workflow.id, workflow)
        registry = registry or ExecutorRegistry()
        config = config or EngineConfig()
        session = cls(catalog, registry, config, session_id or f"session-{uuid.uuid4().hex[:12]}", sink, globals_)
        session._check_bindings(workflow)
        frame = Frame(workflow.id, workflow.initial_state)
        session.state.stack.append(frame)
        session._emit(
            EventType.SESSION_STARTED,
            {"workflow": workflow.id, "initial_state": workflow.initial_state, "cursor_speed": config.cursor_speed},
        )
        session._emit(
            EventType.STATE_ENTERED,
            {"state": workflow.initial_state, "workflow": workflow.id, "depth": 1},
        )
        session._run_entry_actions(workflow, workflow.initial_state)
        return session

    @classmethod
    def restore(
        cls,
        snapshot: Mapping[str, Any],
        *,
        catalog: Mapping[str, WorkflowDefinition],
        registry: ExecutorRegistry | None = None,
        config: EngineConfig | None = None,
        sink: Callable[[SessionEvent], None] | None = None,
        globals_: GlobalCommandSet = DEFAULT_GLOBALS,
    ) -> "Session":
        """Rebuild an equivalent session from snapshot(); emits nothing."""
        config = config or EngineConfig()
        session = cls(catalog, registry or ExecutorRegistry(), config, snapshot["session_id"], sink, globals_)
        for f in snapshot["stack"]:
            wf = session._definition(f["workflow_id"])
            if not wf.has_state(f["state_id"]):
                raise EngineError(f"snapshot state {f['state_id']!r} not in workflow {wf.id!r}")
            resume = Resume.from_dict(f["resume"]) if f.get("resume") else None
            session.state.stack.append(Frame(f["workflow_id"], f["state_id"], resume))
        jr = snapshot.get("jump_return")
        session.state.jump_return = (int(jr[0]), jr[1]) if jr else None
        session.state.autopilot_enabled = bool(snapshot.get("autopilot_enabled", False))
        session.state.cursor_speed = float(snapshot.get("cursor_speed", config.cursor_speed))
        session.state.seq = int(snapshot.get("seq", 0))
        session.ended = bool(snapshot.get("ended", False))
        return session

    # -- introspection ------------------------------------------------------

    @property
    def session_id(self) -> str:
        return self.state.session_id

    def _top(self) -> Frame:
        if not self.state.stack:
            raise EngineError("session has an empty frame stack")
        return self.state.stack[-1]

    def _definition(self, workflow_id: str) -> WorkflowDefinition:
        try:
            return self.catalog[workflow_id]
        except KeyError:
            raise EngineError(f"workflow {workflow_id!r} not in catalog") from None

    def active_workflow(self) -> WorkflowDefinition:
        return self._definition(self._top().workflow_id)

    def active_state(self) -> str:
        return self._top().state_id

    def at_terminal(self) -> bool:
        return self.active_workflow().is_terminal(self.active_state())

    def admissible(self) -> list[str]:
        return admissible_triggers(self.active_workflow(), self.active_state(), self.globals.triggers)

    def admissible_entries(self) -> list[tuple[str, str]]:
        """(trigger, kind) in admissibility order: transitions, jumps, globals."""
        wf = self.active_workflow()
        state = self.active_state()
        out: list[tuple[str, str]] = []
        seen: set[str] = set()
        for t in wf.transitions:
            if t.source == state and t.trigger not in seen:
                out.append((t.trigger, "transition"))
                seen.add(t.trigger)
        for j in wf.jump_states:
            if j.trigger not in seen:
                out.append((j.trigger, "jump"))
                seen.add(j.trigger)
        for g in self.globals.triggers:
            if g not in seen:
                out.append((g, "global"))
                seen.add(g)
        return out

    def snapshot(self) -> dict:
        """Serializable capture; restore(snapshot()) reproduces the session."""
        with self._lock:
            s = self.state
            return {
                "session_id": s.session_id,
                "stack": [
                    {
                        "workflow_id": f.workflow_id,
                        "state_id": f.state_id,
                        "resume": f.resume.to_dict() if f.resume else None,
                    }
                    for f in s.stack
                ],
                "jump_return": [s.jump_return[0], s.jump_return[1]] if s.jump_return else None,
                "autopilot_enabled": s.autopilot_enabled,
                "cursor_speed": s.cursor_speed,
                "seq": s.seq,
                "ended": self.ended,
            }

    # -- event plumbing -----------------------------------------------------

    def _emit(self, type_: EventType, payload: dict) -> SessionEvent:
        self.state.seq += 1
        event = SessionEvent(
            seq=self.state.seq,
            timestamp=self.config.clock(),
            session_id=self.state.session_id,
            type=type_,
            payload=payload,
        )
        self.events.append(event)
        if self.sink is not None:
            self.sink(event)
        return event

    def _context(self) -> ExecutionContext:
        frame = self._top()
        return ExecutionContext(
            session_id=self.state.session_id,
            workflow_id=frame.workflow_id,
            state_id=frame.state_id,
            clock=self.config.clock,
            sleeper=self.config.sleeper,
        )

    # -- checks --------------------------------------------------------------

    def _check_bindings(self, workflow: WorkflowDefinition) -> None:
        seen: set[str] = set()
        frontier = [workflow.id]
        while frontier:
            wf = self.catalog.get(frontier.pop())
            if wf is None or wf.id in seen:
                continue
            seen.add(wf.id)
            for actions in wf._all_action_lists():
                for a in actions:
                    if a.kind in (ActionKind.NONE, ActionKind.CALL_WORKFLOW):
                        continue
                    if not self.registry.is_bound(a.kind):
                        raise ExecutorUnavailable(
                            f"workflow {wf.id!r} uses action kind {a.kind.value!r} with no registered executor"
                        )
            frontier.extend(wf.called_workflow_ids() & self.catalog.keys())

    # -- firing --------------------------------------------------------------

    def fire(self, trigger: str, *, origin: str = "api") -> None:
        """Fire a trigger admissible from the active state.

        Raises InadmissibleTransition, GuardFailed (state unchanged),
        ActionFailed (state unchanged), CallDepthExceeded or SessionEnded.
        """
        with self._lock:
            if self.ended:
                raise SessionEnded(f"session {self.state.session_id} has ended")
            frame = self._top()
            wf = self._definition(frame.workflow_id)
            transition = wf.transition(frame.state_id, trigger)
            if transition is not None:
                self._fire_transition(wf, transition)
                return
            jump = wf.jump(trigger)
            if jump is not None:
                self._fire_jump(wf, jump)
                return
            behavior = self.globals.behavior(trigger)
            if behavior is not None:
                self._fire_global(wf, trigger, behavior)
                return
            raise InadmissibleTransition(
                f"trigger {trigger!r} is not admissible from state {frame.state_id!r} of workflow {wf.id!r}"
            )

    def set_autopilot(self, enabled: bool) -> None:
        with self._lock:
            if self.ended:
                raise SessionEnded(f"session {self.state.session_id} has ended")
            self.state.autopilot_enabled = enabled
            self._emit(EventType.AUTOPILOT_TOGGLED, {"enabled": enabled})

    def record_intent(self, decision, utterance_raw: str) -> None:
        """Log the matcher's verdict (intent_matched / intent_rejected)."""
        with self._lock:
            payload = {
                "utterance": utterance_raw,
                "ranking": [r.to_dict() for r in decision.ranking],
            }
            if decision.matched:
                payload["trigger"] = decision.trigger
                payload["branch"] = decision.branch
                self._emit(EventType.INTENT_MATCHED, payload)
            else:
                payload["reason"] = decision.reason
                self._emit(EventType.INTENT_REJECTED, payload)

    def end(self, reason: str = "api") -> None:
        with self._lock:
            if not self.ended:
                self.ended = True
                self._emit(EventType.SESSION_ENDED, {"reason": reason})

    # -- internals -----------------------------------------------------------

    def _fire_transition(self, wf: WorkflowDefinition, t) -> None:
        frame = self._top()
        if t.guard_check is not None:
            result = self._run_action(t.guard_check, role="guard", trigger=t.trigger)
            if not result.succeeded:
                raise GuardFailed(
                    f"guard for {t.trigger!r} from {frame.state_id!r} did not pass: {result.feedback}"
                )
        self._emit(
            EventType.TRANSITION_FIRED,
            {
                "trigger": t.trigger,
                "kind": "transition",
                "source": t.source,
                "destination": t.destination,
                "workflow": wf.id,
            },
        )
        if self._run_sequence(t.actions, role="transition", trigger=t.trigger, destination=t.destination):
            self._enter_state(t.destination)

    def _fire_jump(self, wf: WorkflowDefinition, jump) -> None:
        if self.state.jump_return is not None:
            raise InadmissibleTransition(
                f"jump {jump.trigger!r} rejected: jump {self.state.jump_return[1]!r} is still executing"
            )
        origin = self._top().state_id
        self.state.jump_return = (len(self.state.stack) - 1, origin)
        self._emit(
            EventType.JUMP_STARTED,
            {"trigger": jump.trigger, "origin_state": origin, "workflow": wf.id, "depth": len(self.state.stack)},
        )
        try:
            done = self._run_sequence(jump.actions, role="jump", trigger=jump.trigger, destination=origin)
        except ActionFailed:
            self._complete_jump(jump.trigger, origin, wf.id, aborted=True)
            raise
        if done:
            self._complete_jump(jump.trigger, origin, wf.id)

    def _complete_jump(self, trigger: str, origin: str, workflow_id: str, aborted: bool = False) -> None:
        self.state.jump_return = None
        payload = {"trigger": trigger, "origin_state": origin, "workflow": workflow_id}
        if aborted:
            payload["aborted"] = True
        self._emit(EventType.JUMP_RETURNED, payload)

    def _fire_global(self, wf: WorkflowDefinition, trigger: str, behavior: GlobalBehavior) -> None:
        state = self._top().state_id
        self._emit(
            EventType.TRANSITION_FIRED,
            {
                "trigger": trigger,
                "kind": "global",
                "behavior": behavior.value,
                "source": state,
                "destination": state,
                "workflow": wf.id,
            },
        )
        if behavior is GlobalBehavior.AUTOPILOT_ON:
            self.state.autopilot_enabled = True
            self._emit(EventType.AUTOPILOT_TOGGLED, {"enabled": True})
        elif behavior is GlobalBehavior.AUTOPILOT_OFF:
            self.state.autopilot_enabled = False
            self._emit(EventType.AUTOPILOT_TOGGLED, {"enabled": False})

    def _run_sequence(self, actions: Sequence[ActionSpec], *, role: str, trigger: str, destination: str) -> bool:
        """Run an action list; suspend on call_workflow. True when complete."""
        for i, action in enumerate(actions):
            if action.kind is ActionKind.CALL_WORKFLOW:
                child = self.catalog.get(str(action.target))
                if child is None:
                    self._emit_action_failed(action, role, trigger, f"workflow {action.target!r} not in catalog")
                    raise ActionFailed(f"call_workflow target {action.target!r} not in catalog")
                if len(self.state.stack) >= self.config.max_call_depth:
                    self._emit_action_failed(action, role, trigger, "max call depth exceeded")
                    raise CallDepthExceeded(
                        f"calling {child.id!r} would exceed max_call_depth={self.config.max_call_depth}"
                    )
                self._top().resume = Resume(
                    kind=role, trigger=trigger, destination=destination, remaining=tuple(actions[i + 1 :])
                )
                self._push_child(child)
                return False
            self._run_action(action, role=role, trigger=trigger)
        return True

    def _run_action(self, action: ActionSpec, *, role: str, trigger: str):
        self._emit(
            EventType.ACTION_STARTED,
            {"kind": action.kind.value, "target": action.target, "role": role, "trigger": trigger},
        )
        try:
            result = self.registry.execute(action, self._context())
        except StatebuddyError as e:
            self._emit_action_failed(action, role, trigger, str(e))
            raise ActionFailed(f"{action.kind.value} {action.target!r}: {e}") from e
        payload = {
            "kind": action.kind.value,
            "target": action.target,
            "role": role,
            "trigger": trigger,
            "status": result.status.value,
            "feedback": result.feedback,
            "duration_ms": result.duration_ms,
        }
        if result.status is ExecutionStatus.FAILED:
            self._emit(EventType.ACTION_FAILED, payload)
            if role == "guard":
                return result
            raise ActionFailed(f"{action.kind.value} {action.target!r} failed: {result.feedback}")
        self._emit(EventType.ACTION_COMPLETED, payload)
        return result

    def _emit_action_failed(self, action: ActionSpec, role: str, trigger: str, feedback: str) -> None:
        self._emit(
            EventType.ACTION_FAILED,
            {
                "kind": action.kind.value,
                "target": action.target,
                "role": role,
                "trigger": trigger,
                "status": ExecutionStatus.FAILED.value,
                "feedback": feedback,
                "duration_ms": 0.0,
            },
        )

    def _enter_state(self, state_id: str) -> None:
        frame = self._top()
        wf = self._definition(frame.workflow_id)
        frame.state_id = state_id
        self._emit(
            EventType.STATE_ENTERED,
            {"state": state_id, "workflow": wf.id, "depth": len(self.state.stack)},
        )
        self._run_entry_actions(wf, state_id)

    def _run_entry_actions(self, wf: WorkflowDefinition, state_id: str) -> None:
        for action in wf.state(state_id).entry_actions:
            self._run_action(action, role="entry", trigger="")
        self._after_entry()

    def _after_entry(self) -> None:
        if len(self.state.stack) > 1 and self.at_terminal():
            self._pop_child()

    def _push_child(self, child: WorkflowDefinition) -> None:
        parent = self._top()
        self.state.stack.append(Frame(child.id, child.initial_state))
        self._emit(
            EventType.WORKFLOW_CALLED,
            {
                "workflow": child.id,
                "initial_state": child.initial_state,
                "parent_workflow": parent.workflow_id,
                "parent_resume": parent.resume.to_dict() if parent.resume else None,
                "depth": len(self.state.stack),
            },
        )
        self._emit(
            EventType.STATE_ENTERED,
            {"state": child.initial_state, "workflow": child.id, "depth": len(self.state.stack)},
        )
        self._run_entry_actions(child, child.initial_state)

    def _pop_child(self) -> None:
        child = self.state.stack.pop()
        parent = self._top()
        self._emit(
            EventType.WORKFLOW_RETURNED,
            {"workflow": child.workflow_id, "parent_workflow": parent.workflow_id, "depth": len(self.state.stack)},
        )
        resume = parent.resume
        parent.resume = None
        if resume is None:
            return
        if resume.kind == "jump":
            try:
                done = self._run_sequence(
                    resume.remaining, role="jump", trigger=resume.trigger, destination=resume.destination
                )
            except ActionFailed:
                self._complete_jump(resume.trigger, resume.destination, parent.workflow_id, aborted=True)
                raise
            if done:
                self._complete_jump(resume.trigger, resume.destination, parent.workflow_id)
        else:
            if self._run_sequence(
                resume.remaining, role=resume.kind, trigger=resume.trigger, destination=resume.destination
            ):
                self._enter_state(resume.destination)

    # -- autopilot -----------------------------------------------------------

    def run_autopilot(self) -> AutopilotRun:
        """Fire default transitions until a halt point.

        Halts on: terminal state, requires_confirmation state (emits
        autopilot_paused), autopilot disabled. Raises AutopilotStepLimit
        after max_autopilot_steps fires; ActionFailed/GuardFailed propagate
        with the session at its last stable state.
        """
        with self._lock:
            steps = 0
            while True:
                if self.ended or not self.state.autopilot_enabled:
                    return AutopilotRun("disabled", steps)
                frame = self._top()
                wf = self._definition(frame.workflow_id)
                if wf.is_terminal(frame.state_id):
                    return AutopilotRun("terminal", steps)
                if wf.state(frame.state_id).requires_confirmation:
                    self._emit(
                        EventType.AUTOPILOT_PAUSED,
                        {"state": frame.state_id, "workflow": wf.id, "reason": "requires_confirmation"},
                    )
                    return AutopilotRun("paused", steps)
                if steps >= self.config.max_autopilot_steps:
                    raise AutopilotStepLimit(
                        f"autopilot exceeded {self.config.max_autopilot_steps} steps without halting"
                    )
                transition = wf.autopilot_transition(frame.state_id)
                if transition is None:
                    return AutopilotRun("terminal", steps)
                self.fire(transition.trigger, origin="autopilot")
                steps += 1
                if self.state.cursor_speed > 0:
                    self.config.sleeper(self.state.cursor_speed)
