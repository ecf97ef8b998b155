"""HTTP + WebSocket session service.

Hosts the workflow catalog and live sessions: create sessions, submit
utterances (matched against the active state's admissible commands), fire
transitions directly, toggle autopilot, stream events (replay + live tail,
seq-deduplicated), serve helper content, and report timing. Event logs are
the source of truth: on restart every session is rebuilt from its log.
"""

from __future__ import annotations

import asyncio
import os
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from . import engine as eng
from .config import ServiceConfig, default_config
from .events import EventLogWriter, EventType, SessionEvent, event_to_json, log_path, read_event_log, replay_snapshot
from .executors import TcpDeviceChannel
from .helper import HelperError, HelperManifest
from .intent import Utterance, make_provider, match_in_state
from .model import export_diagram
from .report import build_report
from .runtime import Catalog, build_registry, load_scenario_templates, scenario_elements, workflow_graph


# ---------------------------------------------------------------------------
# Session handles
# ---------------------------------------------------------------------------

@dataclass
class SessionRecord:
    session_id: str
    workflow_id: str
    created_at: int
    status: str  # live | ended
    log_path: str


class SessionHandle:
    """A live/restored session plus its log writer, event history (for
    replay), and per-session helper cursor state."""

    def __init__(self, record: SessionRecord, session: eng.Session, writer: EventLogWriter | None):
        self.record = record
        self.session = session
        self.writer = writer
        self.event_history: list[SessionEvent] = []
        self.helper_mode = "normal"
        self.helper_cursor = 0
        self.lock = threading.RLock()

    def sink(self, event: SessionEvent) -> None:
        if self.writer is not None:
            self.writer.append(event)
        self.event_history.append(event)
        self._react(event)

    def _react(self, event: SessionEvent) -> None:
        if event.type is EventType.STATE_ENTERED:
            self.helper_cursor = 0
        elif event.type is EventType.TRANSITION_FIRED and event.payload.get("kind") == "global":
            behavior = event.payload.get("behavior")
            if behavior == "next_slide":
                self.helper_cursor += 1
            elif behavior == "previous_slide":
                self.helper_cursor = max(0, self.helper_cursor - 1)
            elif behavior == "skip_mode":
                self.helper_mode = "skip"
            elif behavior == "detail_mode":
                self.helper_mode = "detail"
            elif behavior in ("help", "ok"):
                self.helper_mode = "normal"
        elif event.type is EventType.SESSION_ENDED:
            self.record.status = "ended"

    def close(self) -> None:
        if self.writer is not None:
            self.writer.close()
            self.writer = None


# ---------------------------------------------------------------------------
# App
# ---------------------------------------------------------------------------

class Orchestrator:
    """Owns catalog, scenario/device templates, and all session handles."""

    def __init__(self, config: ServiceConfig, clock=None, session_id_factory=None):
        self.config = config
        self.clock = clock or eng._real_clock
        self.session_id_factory = session_id_factory
        self.scenario_templates, diagnostics = load_scenario_templates(config.scenarios)
        elements = scenario_elements(self.scenario_templates)

        try:
            self.manifest = HelperManifest.load(config.helper_dir)
        except FileNotFoundError:
            self.manifest = HelperManifest.empty()
        except HelperError as e:
            diagnostics.append(f"helper manifest: {e}")
            self.manifest = HelperManifest.empty()

        self.catalog = Catalog.load(config.workflow_dir, elements or None, self.manifest)
        self.catalog.diagnostics = diagnostics + self.catalog.diagnostics
        self.thresholds = config.thresholds
        self.provider = make_provider(config.provider)
        self.handles: dict[str, SessionHandle] = {}
        self._lock = threading.Lock()
        os.makedirs(config.log_dir, exist_ok=True)
        if config.device.get("kind") == "tcp":
            self.shared_device = TcpDeviceChannel(
                config.device["host"], int(config.device["port"]),
                timeout_ms=float(config.device.get("timeout_ms", 5000.0)),
            )
        else:
            self.shared_device = None

    def _engine_config(self) -> eng.EngineConfig:
        return eng.EngineConfig(
            max_call_depth=self.config.max_call_depth,
            max_autopilot_steps=self.config.max_autopilot_steps,
            cursor_speed=self.config.cursor_speed,
            clock=self.clock,
        )

    def _build_registry(self):
        return build_registry(self.scenario_templates, device_channel=self.shared_device)

    def create_session(self, workflow_id: str) -> SessionHandle:
        workflow = self.catalog.workflows.get(workflow_id)
        if workflow is None:
            raise KeyError(workflow_id)
        if self.session_id_factory is not None:
            session_id = self.session_id_factory()
        else:
            session_id = None  # engine picks a uuid
        path_hint = log_path(self.config.log_dir, session_id or "pending")
        record = SessionRecord(
            session_id=session_id or "",
            workflow_id=workflow_id,
            created_at=self.clock(),
            status="live",
            log_path=path_hint,
        )
        handle = SessionHandle(record, session=None, writer=None)  # type: ignore[arg-type]
        session = eng.Session.start(
            workflow,
            catalog=self.catalog.workflows,
            registry=self._build_registry(),
            config=self._engine_config(),
            session_id=session_id,
            sink=handle.sink,
        )
        # The engine may have generated the id; finalize record + writer, then
        # flush the events buffered before the writer existed.
        record.session_id = session.session_id
        record.log_path = log_path(self.config.log_dir, session.session_id)
        handle.session = session
        handle.writer = EventLogWriter(record.log_path)
        for event in handle.event_history:
            handle.writer.append(event)
        with self._lock:
            self.handles[session.session_id] = handle
        return handle

    def restore_sessions(self) -> None:
        if not os.path.isdir(self.config.log_dir):
            return
        for name in sorted(os.listdir(self.config.log_dir)):
            if not name.endswith(".events.jsonl"):
                continue
            path = os.path.join(self.config.log_dir, name)
            try:
                events = read_event_log(path)
            except Exception:
                continue
            if not events:
                continue
            snapshot = replay_snapshot(events)
            root_workflow = events[0].payload.get("workflow", "")
            if not snapshot["ended"] and root_workflow not in self.catalog.workflows:
                self.catalog.diagnostics.append(
                    f"session {snapshot['session_id']}: workflow {root_workflow!r} missing, not restored"
                )
                continue
            record = SessionRecord(
                session_id=snapshot["session_id"],
                workflow_id=root_workflow,
                created_at=events[0].timestamp,
                status="ended" if snapshot["ended"] else "live",
                log_path=path,
            )
            handle = SessionHandle(record, session=None, writer=None)  # type: ignore[arg-type]
            handle.event_history = events
            session = eng.Session.restore(
                snapshot,
                catalog=self.catalog.workflows,
                registry=self._build_registry(),
                config=self._engine_config(),
                sink=handle.sink,
            )
            handle.session = session
            if not snapshot["ended"]:
                handle.writer = EventLogWriter(path)
            with self._lock:
                self.handles[record.session_id] = handle

    def get(self, session_id: str) -> SessionHandle | None:
        return self.handles.get(session_id)

    def shutdown(self) -> None:
        for handle in list(self.handles.values()):
            with handle.lock:
                if not handle.session.ended:
                    handle.session.end(reason="shutdown")
                handle.close()


def state_summary(handle: SessionHandle) -> dict:
    session = handle.session
    wf = session.active_workflow()
    state = session.active_state()
    return {
        "session_id": session.session_id,
        "workflow_id": handle.record.workflow_id,
        "active_workflow": wf.id,
        "state": state,
        "state_label": wf.state(state).human_label,
        "terminal": wf.is_terminal(state),
        "requires_confirmation": wf.state(state).requires_confirmation,
        "admissible": [
            {"trigger": t, "kind": k} for t, k in session.admissible_entries()
        ],
        "autopilot_enabled": session.state.autopilot_enabled,
        "stack": [{"workflow_id": f.workflow_id, "state_id": f.state_id} for f in session.state.stack],
        "depth": len(session.state.stack),
        "seq": session.state.seq,
        "status": "ended" if session.ended else "live",
    }


def record_dict(handle: SessionHandle) -> dict:
    r = handle.record
    return {
        "session_id": r.session_id,
        "workflow_id": r.workflow_id,
        "created_at": r.created_at,
        "status": r.status,
        "log_path": r.log_path,
    }


def _error(status_code: int, kind: str, message: str, **extra) -> JSONResponse:
    body = {"error": kind, "message": message}
    body.update(extra)
    return JSONResponse(body, status_code=status_code)


def create_app(config: ServiceConfig | None = None, *, clock=None, session_id_factory=None) -> FastAPI:
    config = config or default_config()
    orchestrator = Orchestrator(config, clock=clock, session_id_factory=session_id_factory)
    orchestrator.restore_sessions()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        orchestrator.shutdown()

    app = FastAPI(title="statebuddy", lifespan=lifespan)
    app.state.orchestrator = orchestrator

    def _run_autopilot(handle: SessionHandle) -> dict | None:
        session = handle.session
        if session.ended or not session.state.autopilot_enabled:
            return None
        try:
            run = session.run_autopilot()
            return {"halt": run.halt, "steps": run.steps}
        except eng.AutopilotStepLimit as e:
            return {"halt": "step_limit", "message": str(e)}
        except (eng.ActionFailed, eng.GuardFailed, eng.CallDepthExceeded) as e:
            return {"halt": "error", "message": str(e)}

    @app.get("/workflows")
    def list_workflows():
        return {
            "workflows": [
                {
                    "id": w.id,
                    "metadata": dict(w.metadata),
                    "initial_state": w.initial_state,
                    "state_count": len(w.states),
                    "transition_count": len(w.transitions),
                }
                for w in orchestrator.catalog.workflows.values()
            ]
        }

    @app.get("/diagnostics")
    def diagnostics():
        return {"warnings": list(orchestrator.catalog.diagnostics)}

    @app.get("/workflows/{workflow_id}")
    def get_workflow(workflow_id: str):
        w = orchestrator.catalog.workflows.get(workflow_id)
        if w is None:
            return _error(404, "unknown_workflow", f"no workflow {workflow_id!r}")
        graph = workflow_graph(w)
        graph["dot"] = export_diagram(w)
        return graph

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        workflow_id = body.get("workflow_id", "")
        try:
            handle = orchestrator.create_session(workflow_id)
        except KeyError:
            return _error(404, "unknown_workflow", f"no workflow {workflow_id!r}")
        except eng.EngineError as e:
            return _error(409, "engine_error", str(e))
        return {"session": record_dict(handle), "state": state_summary(handle)}

    @app.get("/sessions")
    def list_sessions():
        return {
            "sessions": [
                {**record_dict(h), "state": state_summary(h)} for h in orchestrator.handles.values()
            ]
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        handle = orchestrator.get(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        return {"session": record_dict(handle), "state": state_summary(handle)}

    @app.delete("/sessions/{session_id}")
    def end_session(session_id: str):
        handle = orchestrator.get(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with handle.lock:
            handle.session.end(reason="api")
        return {"session": record_dict(handle), "state": state_summary(handle)}

    @app.post("/sessions/{session_id}/utterance")
    def submit_utterance(session_id: str, body: dict):
        handle = orchestrator.get(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        text = body.get("utterance", "")
        with handle.lock:
            session = handle.session
            if session.ended:
                return _error(409, "session_ended", f"session {session_id} has ended")
            decision = match_in_state(
                Utterance.of(text), session, orchestrator.thresholds, orchestrator.provider
            )
            session.record_intent(decision, text)
            error = None
            autopilot = None
            if decision.matched:
                try:
                    session.fire(decision.trigger, origin="intent")
                    autopilot = _run_autopilot(handle)
                except eng.EngineError as e:
                    error = {"error": type(e).__name__, "message": str(e)}
            response = {"decision": decision.to_dict(), "state": state_summary(handle)}
            if error:
                response["error"] = error
            if autopilot:
                response["autopilot"] = autopilot
            return response

    @app.post("/sessions/{session_id}/transitions/{trigger}")
    def fire_transition(session_id: str, trigger: str):
        handle = orchestrator.get(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with handle.lock:
            session = handle.session
            try:
                session.fire(trigger, origin="api")
            except eng.InadmissibleTransition as e:
                return _error(409, "inadmissible_transition", str(e), state=state_summary(handle))
            except eng.SessionEnded as e:
                return _error(409, "session_ended", str(e))
            except (eng.GuardFailed, eng.ActionFailed, eng.CallDepthExceeded) as e:
                return _error(
                    409, type(e).__name__, str(e), state=state_summary(handle)
                )
            autopilot = _run_autopilot(handle)
            response = {"state": state_summary(handle)}
            if autopilot:
                response["autopilot"] = autopilot
            return response

    @app.post("/sessions/{session_id}/autopilot")
    def set_autopilot(session_id: str, body: dict):
        handle = orchestrator.get(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        enabled = bool(body.get("enabled", False))
        with handle.lock:
            try:
                handle.session.set_autopilot(enabled)
            except eng.SessionEnded as e:
                return _error(409, "session_ended", str(e))
            autopilot = _run_autopilot(handle) if enabled else None
            response = {"state": state_summary(handle)}
            if autopilot:
                response["autopilot"] = autopilot
            return response

    @app.get("/sessions/{session_id}/helper")
    def helper_docs(session_id: str, mode: str | None = None):
        handle = orchestrator.get(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        effective_mode = mode or handle.helper_mode
        if effective_mode not in ("normal", "skip", "detail"):
            return _error(422, "bad_mode", f"unknown helper mode {effective_mode!r}")
        state = handle.session.active_state()
        keys = orchestrator.manifest.docs_for(state, effective_mode)
        documents = [{"key": k, "content": orchestrator.manifest.read_doc(k)} for k in keys]
        cursor = min(handle.helper_cursor, max(0, len(documents) - 1))
        response = {"state": state, "mode": effective_mode, "documents": documents, "cursor": cursor}
        if not documents:
            response["notice"] = f"no helper entry for state {state!r}"
        return response

    @app.get("/sessions/{session_id}/report")
    def session_report(session_id: str):
        handle = orchestrator.get(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        return build_report(handle.event_history)

    @app.websocket("/sessions/{session_id}/events")
    async def event_stream(websocket: WebSocket, session_id: str, from_seq: int = 0):
        handle = orchestrator.get(session_id)
        if handle is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        cursor = max(0, from_seq)  # events are gapless: event with seq k sits at index k-1
        try:
            while True:
                history = handle.event_history
                sent_final = False
                while cursor < len(history):
                    event = history[cursor]
                    cursor += 1
                    await websocket.send_text(event_to_json(event))
                    if event.type is EventType.SESSION_ENDED:
                        sent_final = True
                if sent_final:
                    await websocket.close()
                    return
                await asyncio.sleep(0.02)
        except WebSocketDisconnect:
            return

    if config.console_dir and os.path.isdir(config.console_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=config.console_dir, html=True), name="console")

    return app
