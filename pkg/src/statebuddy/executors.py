"""Tool execution: virtual-GUI simulator, device channel, script/http/wait
executors, and the registry that dispatches ActionSpecs by kind.

Executors never touch session state; they receive a read-only context and
report outcomes through ExecutionResult, which the engine turns into state
changes or failures.
"""

from __future__ import annotations

import json
import socket
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping

from .errors import StatebuddyError
from .model import ActionKind, ActionSpec


class ExecutorError(StatebuddyError):
    pass


class UnboundKind(ExecutorError):
    pass


class UnknownElement(ExecutorError):
    """The element id is not defined anywhere in the scenario (authoring error)."""


class ChannelUnavailable(ExecutorError):
    pass


class DeviceTimeout(ExecutorError):
    pass


class DuplicateCorrelationId(ExecutorError):
    pass


class ExecutionStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"
    CHECK_PASSED = "check_passed"
    CHECK_FAILED = "check_failed"


@dataclass(frozen=True)
class ExecutionResult:
    status: ExecutionStatus
    feedback: str = ""
    duration_ms: float = 0.0

    @property
    def succeeded(self) -> bool:
        return self.status in (ExecutionStatus.OK, ExecutionStatus.CHECK_PASSED)


def _ok(feedback: str = "") -> ExecutionResult:
    return ExecutionResult(ExecutionStatus.OK, feedback)


def _failed(feedback: str) -> ExecutionResult:
    return ExecutionResult(ExecutionStatus.FAILED, feedback)


@dataclass(frozen=True)
class ExecutionContext:
    """Read-only view handed to executors; carries no session mutators."""

    session_id: str
    workflow_id: str
    state_id: str
    clock: Callable[[], int] = lambda: int(time.time() * 1000)
    sleeper: Callable[[float], None] = lambda ms: time.sleep(ms / 1000.0)


# ---------------------------------------------------------------------------
# Virtual GUI
# ---------------------------------------------------------------------------

class VirtualGuiScenario:
    """Declarative model of a third-party application's screens.

    Clicking a visible element follows its edge when one exists, stays put
    otherwise (idempotent buttons), and fails when the element is not on the
    current screen. Text checks search the current screen's visible text.
    """

    def __init__(
        self,
        app_id: str,
        screens: Mapping[str, Mapping[str, Any]],
        edges: Mapping[tuple[str, str], str],
        initial_screen: str,
    ):
        self.app_id = app_id
        self.screens = {
            sid: {"elements": set(spec.get("elements", ())), "visible_text": spec.get("visible_text", "")}
            for sid, spec in screens.items()
        }
        self.edges = dict(edges)
        if initial_screen not in self.screens:
            raise ValueError(f"scenario {app_id!r}: initial screen {initial_screen!r} is not defined")
        for (screen, element), nxt in self.edges.items():
            if screen not in self.screens:
                raise ValueError(f"scenario {app_id!r}: edge references unknown screen {screen!r}")
            if element not in self.screens[screen]["elements"]:
                raise ValueError(f"scenario {app_id!r}: edge element {element!r} not on screen {screen!r}")
            if nxt not in self.screens:
                raise ValueError(f"scenario {app_id!r}: edge targets unknown screen {nxt!r}")
        self.initial_screen = initial_screen
        self.current_screen = initial_screen
        self.action_log: list[dict] = []

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "VirtualGuiScenario":
        edges = {(e["screen"], e["element"]): e["next"] for e in doc.get("edges", [])}
        return cls(
            app_id=doc["app_id"],
            screens=doc.get("screens", {}),
            edges=edges,
            initial_screen=doc["initial_screen"],
        )

    @classmethod
    def from_file(cls, path) -> "VirtualGuiScenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def defined_elements(self) -> set[str]:
        out: set[str] = set()
        for spec in self.screens.values():
            out |= spec["elements"]
        return out

    def reset(self) -> None:
        self.current_screen = self.initial_screen
        self.action_log.append({"op": "reset", "screen": self.current_screen})

    def click(self, element: str) -> ExecutionResult:
        if element not in self.defined_elements():
            raise UnknownElement(f"scenario {self.app_id!r} defines no element {element!r}")
        before = self.current_screen
        if element not in self.screens[before]["elements"]:
            self.action_log.append({"op": "click", "element": element, "screen": before, "outcome": "not_visible"})
            return _failed("element not visible")
        nxt = self.edges.get((before, element))
        if nxt is not None:
            self.current_screen = nxt
        self.action_log.append(
            {"op": "click", "element": element, "screen": before, "outcome": self.current_screen}
        )
        return _ok(f"screen {self.current_screen}")

    def check_text(self, needle: str) -> ExecutionResult:
        text = self.screens[self.current_screen]["visible_text"]
        found = needle in text
        self.action_log.append(
            {"op": "check", "needle": needle, "screen": self.current_screen, "outcome": found}
        )
        status = ExecutionStatus.CHECK_PASSED if found else ExecutionStatus.CHECK_FAILED
        return ExecutionResult(status, f"screen text {'contains' if found else 'lacks'} {needle!r}")


def gui_click(scenario: VirtualGuiScenario, element: str) -> ExecutionResult:
    return scenario.click(element)


def gui_check(scenario: VirtualGuiScenario, needle: str) -> ExecutionResult:
    return scenario.check_text(needle)


class GuiExecutor:
    """Routes gui_click / gui_check actions to the session's scenarios.

    ``params.app`` selects among scenarios; the first configured one is the
    default.
    """

    def __init__(self, scenarios: Mapping[str, VirtualGuiScenario]):
        if not scenarios:
            raise ValueError("GuiExecutor needs at least one scenario")
        self.scenarios = dict(scenarios)
        self.default_app = next(iter(self.scenarios))

    def _scenario(self, action: ActionSpec) -> VirtualGuiScenario:
        app = action.params.get("app", self.default_app)
        try:
            return self.scenarios[app]
        except KeyError:
            raise ChannelUnavailable(f"no virtual-GUI scenario for app {app!r}") from None

    def execute(self, action: ActionSpec, ctx: ExecutionContext) -> ExecutionResult:
        scenario = self._scenario(action)
        if action.kind is ActionKind.GUI_CLICK:
            return scenario.click(str(action.target))
        if action.kind is ActionKind.GUI_CHECK:
            return scenario.check_text(str(action.target))
        return _failed(f"gui executor cannot run {action.kind.value}")


# ---------------------------------------------------------------------------
# Device channel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviceCommand:
    device: str
    command: str
    params: Mapping[str, Any]
    correlation_id: str

    def to_dict(self) -> dict:
        return {
            "device": self.device,
            "command": self.command,
            "params": dict(self.params),
            "correlation_id": self.correlation_id,
        }


class StubDeviceChannel:
    """In-process channel: appends commands to a log and acks synchronously.

    ``fail_commands`` lets tests force error acks for named commands.
    """

    def __init__(self, fail_commands: set[str] | None = None):
        self.log: list[DeviceCommand] = []
        self.fail_commands = fail_commands or set()
        self._seen: set[str] = set()
        self._lock = threading.Lock()

    def send(self, command: DeviceCommand) -> ExecutionResult:
        with self._lock:
            if command.correlation_id in self._seen:
                raise DuplicateCorrelationId(f"correlation id {command.correlation_id!r} already used")
            self._seen.add(command.correlation_id)
            self.log.append(command)
        if command.command in self.fail_commands:
            return _failed(f"device rejected {command.command!r}")
        return _ok(f"acked {command.command}")


class TcpDeviceChannel:
    """Newline-delimited JSON over TCP.

    Request: {device, command, params, correlation_id}; the peer must answer
    one line {correlation_id, status, detail} within the timeout. Sends are
    serialized per channel.
    """

    def __init__(self, host: str, port: int, timeout_ms: float = 5000.0):
        self.host = host
        self.port = port
        self.timeout_ms = timeout_ms
        self._sock: socket.socket | None = None
        self._reader = None
        self._seen: set[str] = set()
        self._lock = threading.Lock()

    def _connect(self):
        if self._sock is None:
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout_ms / 1000.0)
                self._reader = self._sock.makefile("r", encoding="utf-8")
            except OSError as e:
                self._sock = None
                raise ChannelUnavailable(f"device channel {self.host}:{self.port}: {e}") from e

    def close(self):
        with self._lock:
            if self._sock is not None:
                try:
                    self._sock.close()
                finally:
                    self._sock = None
                    self._reader = None

    def send(self, command: DeviceCommand) -> ExecutionResult:
        with self._lock:
            if command.correlation_id in self._seen:
                raise DuplicateCorrelationId(f"correlation id {command.correlation_id!r} already used")
            self._connect()
            self._seen.add(command.correlation_id)
            try:
                self._sock.sendall((json.dumps(command.to_dict()) + "\n").encode("utf-8"))
                line = self._reader.readline()
            except socket.timeout as e:
                raise DeviceTimeout(f"no ack for {command.correlation_id!r} within {self.timeout_ms}ms") from e
            except OSError as e:
                self._sock = None
                raise ChannelUnavailable(f"device channel lost: {e}") from e
        if not line:
            raise ChannelUnavailable("device channel closed by peer")
        try:
            ack = json.loads(line)
        except json.JSONDecodeError as e:
            return _failed(f"malformed ack: {e}")
        if ack.get("correlation_id") != command.correlation_id:
            return _failed(f"ack for wrong correlation id {ack.get('correlation_id')!r}")
        if ack.get("status") == "ok":
            return _ok(ack.get("detail", ""))
        return _failed(ack.get("detail", f"device status {ack.get('status')!r}"))


def send_device_command(channel, command: DeviceCommand) -> ExecutionResult:
    return channel.send(command)


class DeviceExecutor:
    """Builds DeviceCommands from actions; correlation ids are unique per
    session by construction ("<session_id>:<counter>")."""

    def __init__(self, channel, default_device: str = "device0"):
        self.channel = channel
        self.default_device = default_device
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()

    def execute(self, action: ActionSpec, ctx: ExecutionContext) -> ExecutionResult:
        with self._lock:
            n = self._counters.get(ctx.session_id, 0) + 1
            self._counters[ctx.session_id] = n
        params = {k: v for k, v in action.params.items() if k != "device"}
        command = DeviceCommand(
            device=str(action.params.get("device", self.default_device)),
            command=str(action.target),
            params=params,
            correlation_id=f"{ctx.session_id}:{n}",
        )
        return self.channel.send(command)


# ---------------------------------------------------------------------------
# Script / HTTP / wait
# ---------------------------------------------------------------------------

class ScriptExecutor:
    """Named Python callables: fn(params, ctx) -> None | bool | str.

    True/False map to check verdicts so scripts can guard transitions; any
    exception becomes a failed result.
    """

    def __init__(self, functions: Mapping[str, Callable] | None = None):
        self.functions = dict(functions or {})

    def register(self, name: str, fn: Callable) -> None:
        self.functions[name] = fn

    def execute(self, action: ActionSpec, ctx: ExecutionContext) -> ExecutionResult:
        fn = self.functions.get(str(action.target))
        if fn is None:
            return _failed(f"script {action.target!r} not registered")
        try:
            value = fn(dict(action.params), ctx)
        except Exception as e:
            return _failed(f"script {action.target!r} raised {type(e).__name__}: {e}")
        if value is True:
            return ExecutionResult(ExecutionStatus.CHECK_PASSED, f"script {action.target}")
        if value is False:
            return ExecutionResult(ExecutionStatus.CHECK_FAILED, f"script {action.target}")
        return _ok(str(value) if value is not None else f"script {action.target}")


class HttpExecutor:
    """POSTs the action params as JSON to the target URL (method overridable
    via params.method); non-2xx or transport errors are failed results."""

    def __init__(self, timeout_ms: float = 5000.0):
        self.timeout_ms = timeout_ms

    def execute(self, action: ActionSpec, ctx: ExecutionContext) -> ExecutionResult:
        import httpx

        params = dict(action.params)
        method = str(params.pop("method", "POST")).upper()
        try:
            resp = httpx.request(method, str(action.target), json=params, timeout=self.timeout_ms / 1000.0)
        except Exception as e:
            return _failed(f"http {method} {action.target}: {e}")
        if 200 <= resp.status_code < 300:
            return _ok(f"{resp.status_code} {resp.text[:200]}")
        return _failed(f"{resp.status_code} {resp.text[:200]}")


class WaitExecutor:
    """Sleeps action.target milliseconds through the context's sleeper."""

    def execute(self, action: ActionSpec, ctx: ExecutionContext) -> ExecutionResult:
        ctx.sleeper(float(action.target))
        return _ok(f"waited {action.target}ms")


class NoneExecutor:
    def execute(self, action: ActionSpec, ctx: ExecutionContext) -> ExecutionResult:
        return _ok("no-op")


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

class ExecutorRegistry:
    """Maps action kinds to executor instances and dispatches with timing.

    Unbound kinds fail closed before any side effect. Operational errors
    (channel down, device timeout) become failed results; authoring errors
    (UnknownElement) propagate.
    """

    def __init__(self):
        self._bindings: dict[ActionKind, Any] = {}
        self._timeouts: dict[ActionKind, float] = {}

    def bind(self, kind: ActionKind, executor, timeout_ms: float = 10000.0) -> "ExecutorRegistry":
        self._bindings[kind] = executor
        self._timeouts[kind] = timeout_ms
        return self

    def bound_kinds(self) -> set[ActionKind]:
        return set(self._bindings) | {ActionKind.NONE, ActionKind.CALL_WORKFLOW}

    def is_bound(self, kind: ActionKind) -> bool:
        return kind in self.bound_kinds()

    def timeout_ms(self, kind: ActionKind) -> float:
        return self._timeouts.get(kind, 10000.0)

    def execute(self, action: ActionSpec, ctx: ExecutionContext) -> ExecutionResult:
        if action.kind is ActionKind.NONE:
            return _ok("no-op")
        executor = self._bindings.get(action.kind)
        if executor is None:
            raise UnboundKind(f"no executor bound for action kind {action.kind.value!r}")
        start = ctx.clock()
        try:
            result = executor.execute(action, ctx)
        except (ChannelUnavailable, DeviceTimeout, DuplicateCorrelationId) as e:
            result = _failed(str(e))
        duration = float(ctx.clock() - start)
        return ExecutionResult(result.status, result.feedback, duration)


def default_registry(
    scenarios: Mapping[str, VirtualGuiScenario] | None = None,
    device_channel=None,
    scripts: Mapping[str, Callable] | None = None,
    http_timeout_ms: float = 5000.0,
) -> ExecutorRegistry:
    """Registry with the standard bindings; omitted tools stay unbound."""
    registry = ExecutorRegistry()
    if scenarios:
        gui = GuiExecutor(scenarios)
        registry.bind(ActionKind.GUI_CLICK, gui)
        registry.bind(ActionKind.GUI_CHECK, gui)
    registry.bind(ActionKind.DEVICE, DeviceExecutor(device_channel or StubDeviceChannel()))
    registry.bind(ActionKind.SCRIPT, ScriptExecutor(scripts))
    registry.bind(ActionKind.HTTP, HttpExecutor(timeout_ms=http_timeout_ms))
    registry.bind(ActionKind.WAIT, WaitExecutor())
    return registry
