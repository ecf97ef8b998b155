"""Workflow definitions: parsing, validation, trigger enumeration, DOT export.

A workflow is a declarative finite state machine stored as one UTF-8 JSON
document (snake_case keys, ``schema_version`` "1"). Loading is strict by
default: unknown keys are rejected, every structural invariant is checked,
and all violations are reported together so an author can fix a whole file
per pass.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .errors import StatebuddyError

SCHEMA_VERSION = "1"

# Trigger names reserved by the engine's built-in global command set.
# Jump-state triggers must not collide with these.
RESERVED_GLOBAL_TRIGGERS = (
    "AutoPilotOn",
    "AutoPilotOff",
    "Help",
    "NextSlide",
    "PreviousSlide",
    "Ok",
    "Skip",
    "Detail",
)


class ActionKind(str, Enum):
    GUI_CLICK = "gui_click"
    GUI_CHECK = "gui_check"
    DEVICE = "device"
    SCRIPT = "script"
    HTTP = "http"
    CALL_WORKFLOW = "call_workflow"
    WAIT = "wait"
    NONE = "none"


#: Kinds that may be used as a transition guard (must yield a check verdict).
CHECK_CAPABLE_KINDS = frozenset({ActionKind.GUI_CHECK, ActionKind.SCRIPT})


class ModelError(StatebuddyError):
    pass


class ParseError(ModelError):
    """The source document is not well-formed JSON."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


@dataclass(frozen=True)
class Violation:
    """One violated invariant, located by a path into the document."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ValidationError(ModelError):
    """All invariant violations found in one document, reported together."""

    def __init__(self, violations: Sequence[Violation], workflow_id: str = ""):
        self.violations = list(violations)
        self.workflow_id = workflow_id
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid workflow {workflow_id or '<unnamed>'}: {lines}")


class UnknownState(ModelError):
    def __init__(self, workflow_id: str, state_id: str):
        self.workflow_id = workflow_id
        self.state_id = state_id
        super().__init__(f"workflow {workflow_id!r} has no state {state_id!r}")


@dataclass(frozen=True)
class ActionSpec:
    """One tool invocation: what kind, against which target, with which args."""

    kind: ActionKind
    target: Any = ""
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "target": self.target, "params": dict(self.params)}


@dataclass(frozen=True)
class StateDef:
    id: str
    human_label: str = ""
    helper_doc: str | None = None
    entry_actions: tuple[ActionSpec, ...] = ()
    requires_confirmation: bool = False
    terminal: bool = False


@dataclass(frozen=True)
class TransitionDef:
    trigger: str
    source: str
    destination: str
    actions: tuple[ActionSpec, ...] = ()
    autopilot_default: bool = False
    guard_check: ActionSpec | None = None


@dataclass(frozen=True)
class JumpStateDef:
    """Globally triggerable action sequence; control returns to the origin state."""

    trigger: str
    actions: tuple[ActionSpec, ...] = ()
    description: str = ""


@dataclass(frozen=True)
class WorkflowDefinition:
    id: str
    states: tuple[StateDef, ...]
    transitions: tuple[TransitionDef, ...]
    jump_states: tuple[JumpStateDef, ...]
    initial_state: str
    terminal_states: frozenset[str]
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def state(self, state_id: str) -> StateDef:
        for s in self.states:
            if s.id == state_id:
                return s
        raise UnknownState(self.id, state_id)

    def has_state(self, state_id: str) -> bool:
        return any(s.id == state_id for s in self.states)

    def is_terminal(self, state_id: str) -> bool:
        return state_id in self.terminal_states

    def transitions_from(self, state_id: str) -> tuple[TransitionDef, ...]:
        return tuple(t for t in self.transitions if t.source == state_id)

    def transition(self, state_id: str, trigger: str) -> TransitionDef | None:
        for t in self.transitions:
            if t.source == state_id and t.trigger == trigger:
                return t
        return None

    def jump(self, trigger: str) -> JumpStateDef | None:
        for j in self.jump_states:
            if j.trigger == trigger:
                return j
        return None

    def autopilot_transition(self, state_id: str) -> TransitionDef | None:
        """Flagged default, else the first-listed outgoing transition."""
        outgoing = self.transitions_from(state_id)
        for t in outgoing:
            if t.autopilot_default:
                return t
        return outgoing[0] if outgoing else None

    def called_workflow_ids(self) -> set[str]:
        """Every workflow id referenced by a call_workflow action."""
        ids: set[str] = set()
        for actions in self._all_action_lists():
            for a in actions:
                if a.kind is ActionKind.CALL_WORKFLOW:
                    ids.add(str(a.target))
        return ids

    def gui_targets(self) -> set[str]:
        """Every element id referenced by a gui_click action."""
        out: set[str] = set()
        for actions in self._all_action_lists():
            for a in actions:
                if a.kind is ActionKind.GUI_CLICK:
                    out.add(str(a.target))
        return out

    def _all_action_lists(self) -> Iterable[tuple[ActionSpec, ...]]:
        for s in self.states:
            yield s.entry_actions
        for t in self.transitions:
            yield t.actions
            if t.guard_check is not None:
                yield (t.guard_check,)
        for j in self.jump_states:
            yield j.actions


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_STATE_KEYS = {"id", "human_label", "helper_doc", "entry_actions", "requires_confirmation", "terminal"}
_TRANSITION_KEYS = {"trigger", "source", "destination", "actions", "autopilot_default", "guard_check"}
_JUMP_KEYS = {"trigger", "actions", "description"}
_ACTION_KEYS = {"kind", "target", "params"}
_TOP_KEYS = {"schema_version", "id", "metadata", "states", "transitions", "jump_states", "initial_state", "terminal_states"}


class _Collector:
    """Accumulates violations; validation never stops at the first failure."""

    def __init__(self) -> None:
        self.violations: list[Violation] = []

    def add(self, path: str, message: str) -> None:
        self.violations.append(Violation(path, message))

    def expect(self, obj: Mapping, key: str, kinds, path: str, default=None, required=False):
        """Fetch obj[key], checking its JSON type; wrong types become violations."""
        if key not in obj:
            if required:
                self.add(f"{path}.{key}", "required field missing")
            return default
        value = obj[key]
        if value is None and not required:
            return default
        if not isinstance(value, kinds):
            names = kinds.__name__ if isinstance(kinds, type) else "/".join(k.__name__ for k in kinds)
            self.add(f"{path}.{key}", f"expected {names}, got {type(value).__name__}")
            return default
        return value

    def unknown_keys(self, obj: Mapping, allowed: set[str], path: str, lenient: bool) -> None:
        if lenient:
            return
        for key in obj:
            if key not in allowed:
                self.add(f"{path}.{key}", "unknown field (strict mode; load with lenient to ignore)")


def _parse_action(raw: Any, path: str, col: _Collector, lenient: bool) -> ActionSpec | None:
    if not isinstance(raw, Mapping):
        col.add(path, f"action must be an object, got {type(raw).__name__}")
        return None
    col.unknown_keys(raw, _ACTION_KEYS, path, lenient)
    kind_raw = col.expect(raw, "kind", str, path, required=True)
    if kind_raw is None:
        return None
    try:
        kind = ActionKind(kind_raw)
    except ValueError:
        col.add(f"{path}.kind", f"unknown action kind {kind_raw!r}")
        return None
    target = raw.get("target", "")
    if not isinstance(target, (str, int, float)) or isinstance(target, bool):
        col.add(f"{path}.target", f"expected string or number, got {type(target).__name__}")
        target = ""
    params = col.expect(raw, "params", dict, path, default={})
    if kind is ActionKind.WAIT:
        if not isinstance(target, (int, float)) or isinstance(target, bool):
            col.add(f"{path}.target", "wait target must be a duration in milliseconds")
        elif target < 0:
            col.add(f"{path}.target", "wait duration must be >= 0")
    elif kind is ActionKind.CALL_WORKFLOW:
        if not isinstance(target, str) or not target:
            col.add(f"{path}.target", "call_workflow target must be a workflow id")
    elif kind is not ActionKind.NONE:
        if not isinstance(target, str) or not target:
            col.add(f"{path}.target", f"{kind.value} target must be a non-empty string")
    return ActionSpec(kind=kind, target=target, params=dict(params or {}))


def _parse_actions(raw: Any, path: str, col: _Collector, lenient: bool, *, allow_call: bool) -> tuple[ActionSpec, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        col.add(path, f"expected list of actions, got {type(raw).__name__}")
        return ()
    out = []
    for i, entry in enumerate(raw):
        a = _parse_action(entry, f"{path}[{i}]", col, lenient)
        if a is None:
            continue
        if a.kind is ActionKind.CALL_WORKFLOW and not allow_call:
            col.add(f"{path}[{i}]", "call_workflow is only allowed in transition and jump actions")
            continue
        out.append(a)
    return tuple(out)


def load_workflow(source: str | bytes | Mapping, *, lenient: bool = False) -> WorkflowDefinition:
    """Parse and fully validate one workflow document.

    Raises ParseError for malformed JSON and ValidationError carrying every
    violated invariant; a structurally well-formed document never crashes.
    """
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, e.lineno, e.colno) from e
    else:
        doc = source
    if not isinstance(doc, Mapping):
        raise ValidationError([Violation("$", f"document must be a JSON object, got {type(doc).__name__}")])

    col = _Collector()
    col.unknown_keys(doc, _TOP_KEYS, "$", lenient)

    version = col.expect(doc, "schema_version", str, "$", required=True)
    if version is not None and version != SCHEMA_VERSION:
        col.add("$.schema_version", f"unsupported schema version {version!r} (expected {SCHEMA_VERSION!r})")

    wf_id = col.expect(doc, "id", str, "$", default="", required=True) or ""
    if not wf_id:
        col.add("$.id", "workflow id must be a non-empty string")
    metadata = col.expect(doc, "metadata", dict, "$", default={}) or {}

    # States
    states: list[StateDef] = []
    raw_states = col.expect(doc, "states", list, "$", default=[], required=True) or []
    seen_state_ids: set[str] = set()
    for i, raw in enumerate(raw_states):
        path = f"$.states[{i}]"
        if not isinstance(raw, Mapping):
            col.add(path, f"state must be an object, got {type(raw).__name__}")
            continue
        col.unknown_keys(raw, _STATE_KEYS, path, lenient)
        sid = col.expect(raw, "id", str, path, default="", required=True) or ""
        if not sid:
            col.add(f"{path}.id", "state id must be a non-empty string")
            continue
        if sid in seen_state_ids:
            col.add(f"{path}.id", f"duplicate state id {sid!r}")
            continue
        seen_state_ids.add(sid)
        states.append(
            StateDef(
                id=sid,
                human_label=col.expect(raw, "human_label", str, path, default=sid) or sid,
                helper_doc=col.expect(raw, "helper_doc", str, path, default=None),
                entry_actions=_parse_actions(raw.get("entry_actions"), f"{path}.entry_actions", col, lenient, allow_call=False),
                requires_confirmation=bool(col.expect(raw, "requires_confirmation", bool, path, default=False)),
                terminal=bool(col.expect(raw, "terminal", bool, path, default=False)),
            )
        )
    if not states:
        col.add("$.states", "workflow must define at least one state")

    # Terminal set: union of the top-level list and per-state flags, normalized both ways.
    terminal_listed = col.expect(doc, "terminal_states", list, "$", default=[]) or []
    terminal: set[str] = set()
    for i, sid in enumerate(terminal_listed):
        if not isinstance(sid, str):
            col.add(f"$.terminal_states[{i}]", "state id must be a string")
        elif sid not in seen_state_ids:
            col.add(f"$.terminal_states[{i}]", f"unknown state {sid!r}")
        else:
            terminal.add(sid)
    terminal |= {s.id for s in states if s.terminal}
    states = [
        StateDef(
            id=s.id,
            human_label=s.human_label,
            helper_doc=s.helper_doc,
            entry_actions=s.entry_actions,
            requires_confirmation=s.requires_confirmation,
            terminal=s.id in terminal,
        )
        for s in states
    ]

    initial = col.expect(doc, "initial_state", str, "$", default="", required=True) or ""
    if initial and initial not in seen_state_ids:
        col.add("$.initial_state", f"unknown state {initial!r}")

    # Transitions
    transitions: list[TransitionDef] = []
    raw_transitions = col.expect(doc, "transitions", list, "$", default=[]) or []
    triggers_per_source: dict[str, set[str]] = {}
    defaults_per_source: dict[str, int] = {}
    for i, raw in enumerate(raw_transitions):
        path = f"$.transitions[{i}]"
        if not isinstance(raw, Mapping):
            col.add(path, f"transition must be an object, got {type(raw).__name__}")
            continue
        col.unknown_keys(raw, _TRANSITION_KEYS, path, lenient)
        trigger = col.expect(raw, "trigger", str, path, default="", required=True) or ""
        source = col.expect(raw, "source", str, path, default="", required=True) or ""
        destination = col.expect(raw, "destination", str, path, default="", required=True) or ""
        if not trigger:
            col.add(f"{path}.trigger", "trigger must be a non-empty string")
        if source and source not in seen_state_ids:
            col.add(f"{path}.source", f"unknown state {source!r}")
        if destination and destination not in seen_state_ids:
            col.add(f"{path}.destination", f"unknown state {destination!r}")
        if trigger and source:
            bucket = triggers_per_source.setdefault(source, set())
            if trigger in bucket:
                col.add(f"{path}.trigger", f"duplicate trigger {trigger!r} from state {source!r}")
            bucket.add(trigger)
        guard_raw = raw.get("guard_check")
        guard = None
        if guard_raw is not None:
            guard = _parse_action(guard_raw, f"{path}.guard_check", col, lenient)
            if guard is not None and guard.kind not in CHECK_CAPABLE_KINDS:
                col.add(
                    f"{path}.guard_check",
                    f"guard kind must be check-capable ({', '.join(sorted(k.value for k in CHECK_CAPABLE_KINDS))})",
                )
        autopilot_default = bool(col.expect(raw, "autopilot_default", bool, path, default=False))
        if autopilot_default and source:
            defaults_per_source[source] = defaults_per_source.get(source, 0) + 1
        transitions.append(
            TransitionDef(
                trigger=trigger,
                source=source,
                destination=destination,
                actions=_parse_actions(raw.get("actions"), f"{path}.actions", col, lenient, allow_call=True),
                autopilot_default=autopilot_default,
                guard_check=guard,
            )
        )
    for source, count in defaults_per_source.items():
        if count > 1:
            col.add("$.transitions", f"state {source!r} flags {count} transitions autopilot_default (at most one allowed)")

    # Outgoing-degree rules
    for s in states:
        outgoing = [t for t in transitions if t.source == s.id]
        if s.id in terminal and outgoing:
            col.add(f"$.states[{s.id}]", f"terminal state has {len(outgoing)} outgoing transitions (must have none)")
        if s.id not in terminal and not outgoing:
            col.add(f"$.states[{s.id}]", "non-terminal state has no outgoing transition")

    # Jump states
    jumps: list[JumpStateDef] = []
    raw_jumps = col.expect(doc, "jump_states", list, "$", default=[]) or []
    all_transition_triggers = {t.trigger for t in transitions if t.trigger}
    seen_jump_triggers: set[str] = set()
    for i, raw in enumerate(raw_jumps):
        path = f"$.jump_states[{i}]"
        if not isinstance(raw, Mapping):
            col.add(path, f"jump state must be an object, got {type(raw).__name__}")
            continue
        col.unknown_keys(raw, _JUMP_KEYS, path, lenient)
        trigger = col.expect(raw, "trigger", str, path, default="", required=True) or ""
        if not trigger:
            col.add(f"{path}.trigger", "jump trigger must be a non-empty string")
            continue
        if trigger in seen_jump_triggers:
            col.add(f"{path}.trigger", f"duplicate jump trigger {trigger!r}")
        seen_jump_triggers.add(trigger)
        if trigger in all_transition_triggers:
            col.add(f"{path}.trigger", f"jump trigger {trigger!r} collides with a transition trigger")
        if trigger in RESERVED_GLOBAL_TRIGGERS:
            col.add(f"{path}.trigger", f"jump trigger {trigger!r} collides with a built-in global command")
        jumps.append(
            JumpStateDef(
                trigger=trigger,
                actions=_parse_actions(raw.get("actions"), f"{path}.actions", col, lenient, allow_call=True),
                description=col.expect(raw, "description", str, path, default="") or "",
            )
        )

    if col.violations:
        raise ValidationError(col.violations, wf_id)

    return WorkflowDefinition(
        id=wf_id,
        states=tuple(states),
        transitions=tuple(transitions),
        jump_states=tuple(jumps),
        initial_state=initial,
        terminal_states=frozenset(terminal),
        metadata=dict(metadata),
    )


def serialize_workflow(w: WorkflowDefinition) -> str:
    """Emit the canonical JSON document; load_workflow(serialize_workflow(w)) == w."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "id": w.id,
        "metadata": dict(w.metadata),
        "initial_state": w.initial_state,
        "terminal_states": sorted(w.terminal_states),
        "states": [
            {
                "id": s.id,
                "human_label": s.human_label,
                "helper_doc": s.helper_doc,
                "entry_actions": [a.to_dict() for a in s.entry_actions],
                "requires_confirmation": s.requires_confirmation,
                "terminal": s.terminal,
            }
            for s in w.states
        ],
        "transitions": [
            {
                "trigger": t.trigger,
                "source": t.source,
                "destination": t.destination,
                "actions": [a.to_dict() for a in t.actions],
                "autopilot_default": t.autopilot_default,
                "guard_check": t.guard_check.to_dict() if t.guard_check else None,
            }
            for t in w.transitions
        ],
        "jump_states": [
            {"trigger": j.trigger, "actions": [a.to_dict() for a in j.actions], "description": j.description}
            for j in w.jump_states
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def load_workflow_file(path, *, lenient: bool = False) -> WorkflowDefinition:
    with open(path, "r", encoding="utf-8") as fh:
        return load_workflow(fh.read(), lenient=lenient)


# ---------------------------------------------------------------------------
# Trigger enumeration
# ---------------------------------------------------------------------------

def admissible_triggers(
    w: WorkflowDefinition, state_id: str, global_triggers: Sequence[str] = ()
) -> list[str]:
    """Commands available from a state, in definition order, without duplicates.

    Order: outgoing transition triggers, then jump triggers, then global
    commands. A transition trigger shadows a like-named global command.
    """
    if not w.has_state(state_id):
        raise UnknownState(w.id, state_id)
    out: list[str] = []
    seen: set[str] = set()
    for t in w.transitions:
        if t.source == state_id and t.trigger not in seen:
            out.append(t.trigger)
            seen.add(t.trigger)
    for j in w.jump_states:
        if j.trigger not in seen:
            out.append(j.trigger)
            seen.add(j.trigger)
    for g in global_triggers:
        if g not in seen:
            out.append(g)
            seen.add(g)
    return out


# ---------------------------------------------------------------------------
# Diagram export
# ---------------------------------------------------------------------------

def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_diagram(w: WorkflowDefinition) -> str:
    """Render the workflow as DOT text: states left-to-right in definition
    order, transitions as labeled edges, jump states as detached dashed nodes."""
    lines = [f"digraph {_dot_quote(w.id)} {{", "  rankdir=LR;", "  node [shape=box];"]
    for s in w.states:
        attrs = [f"label={_dot_quote(s.human_label)}"]
        if s.id == w.initial_state:
            attrs.append("penwidth=2")
        if s.terminal:
            attrs.append("peripheries=2")
        lines.append(f"  {_dot_quote(s.id)} [{', '.join(attrs)}];")
    for t in w.transitions:
        lines.append(f"  {_dot_quote(t.source)} -> {_dot_quote(t.destination)} [label={_dot_quote(t.trigger)}];")
    for j in w.jump_states:
        node = f"jump:{j.trigger}"
        lines.append(f"  {_dot_quote(node)} [label={_dot_quote(j.trigger)}, style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Cross-definition checks (catalog level)
# ---------------------------------------------------------------------------

def check_workflow_links(w: WorkflowDefinition, known_ids: Iterable[str]) -> list[Violation]:
    """call_workflow targets must name loadable workflows."""
    known = set(known_ids)
    out = []
    for target in sorted(w.called_workflow_ids()):
        if target not in known:
            out.append(Violation(f"$[{w.id}]", f"call_workflow target {target!r} is not a loadable workflow"))
    return out


def check_gui_targets(w: WorkflowDefinition, known_elements: Iterable[str]) -> list[Violation]:
    """gui_click targets must exist in the attached virtual-GUI scenarios."""
    known = set(known_elements)
    out = []
    for element in sorted(w.gui_targets()):
        if element not in known:
            out.append(Violation(f"$[{w.id}]", f"gui_click element {element!r} is not defined by any attached scenario"))
    return out


def reachable_states(w: WorkflowDefinition) -> set[str]:
    """States reachable from the initial state along transitions."""
    seen = {w.initial_state}
    frontier = [w.initial_state]
    while frontier:
        cur = frontier.pop()
        for t in w.transitions:
            if t.source == cur and t.destination not in seen:
                seen.add(t.destination)
                frontier.append(t.destination)
    return seen


_CAMEL_SPLIT = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def split_trigger_words(trigger: str) -> str:
    """Turn a trigger identifier into spoken-style words: "NextState" -> "next state"."""
    text = _CAMEL_SPLIT.sub(" ", trigger)
    text = re.sub(r"[_\-]+", " ", text)
    return " ".join(text.lower().split())
