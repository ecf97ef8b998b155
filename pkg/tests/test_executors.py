import dataclasses
import json
import socket
import threading
import time

import pytest

from statebuddy.executors import (
    DeviceCommand,
    DeviceExecutor,
    DuplicateCorrelationId,
    ExecutionContext,
    ExecutionStatus,
    ExecutorRegistry,
    GuiExecutor,
    HttpExecutor,
    ScriptExecutor,
    StubDeviceChannel,
    TcpDeviceChannel,
    UnboundKind,
    UnknownElement,
    VirtualGuiScenario,
    WaitExecutor,
    default_registry,
    gui_check,
    gui_click,
    send_device_command,
)
from statebuddy.model import ActionKind, ActionSpec

SCENARIO_DOC = {
    "app_id": "studio",
    "initial_screen": "desktop",
    "screens": {
        "desktop": {"elements": ["studio_icon", "trash_icon"], "visible_text": "Desktop"},
        "home": {"elements": ["record_button"], "visible_text": "Processing complete"},
        "recording": {"elements": [], "visible_text": "Recording frames"},
    },
    "edges": [
        {"screen": "desktop", "element": "studio_icon", "next": "home"},
        {"screen": "home", "element": "record_button", "next": "recording"},
    ],
}


def ctx(**kwargs):
    defaults = dict(session_id="s1", workflow_id="w", state_id="S0")
    defaults.update(kwargs)
    return ExecutionContext(**defaults)


class TestVirtualGui:
    def test_click_with_edge_advances(self):
        s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
        result = gui_click(s, "studio_icon")
        assert result.status is ExecutionStatus.OK
        assert s.current_screen == "home"
        result = gui_click(s, "record_button")
        assert result.status is ExecutionStatus.OK
        assert s.current_screen == "recording"

    def test_click_wrong_screen_fails(self):
        s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
        result = gui_click(s, "record_button")  # defined on home, not desktop
        assert result.status is ExecutionStatus.FAILED
        assert result.feedback == "element not visible"
        assert s.current_screen == "desktop"

    def test_click_visible_edgeless_element_stays(self):
        s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
        result = gui_click(s, "trash_icon")
        assert result.status is ExecutionStatus.OK
        assert s.current_screen == "desktop"

    def test_unknown_element_raises(self):
        s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
        with pytest.raises(UnknownElement):
            gui_click(s, "never_defined")

    def test_check_passed_on_substring(self):
        s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
        gui_click(s, "studio_icon")
        assert gui_check(s, "complete").status is ExecutionStatus.CHECK_PASSED

    def test_check_empty_needle_passes(self):
        s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
        assert gui_check(s, "").status is ExecutionStatus.CHECK_PASSED

    def test_check_absent_needle_fails(self):
        s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
        assert gui_check(s, "complete").status is ExecutionStatus.CHECK_FAILED

    def test_check_is_case_sensitive(self):
        s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
        assert gui_check(s, "desktop").status is ExecutionStatus.CHECK_FAILED
        assert gui_check(s, "Desktop").status is ExecutionStatus.CHECK_PASSED

    def test_replay_determinism(self):
        clicks = ["studio_icon", "record_button"]
        outcomes = []
        for _ in range(2):
            s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
            for c in clicks:
                gui_click(s, c)
            outcomes.append((s.current_screen, s.action_log))
        assert outcomes[0] == outcomes[1]

    def test_action_log_grows_monotonically(self):
        s = VirtualGuiScenario.from_dict(SCENARIO_DOC)
        sizes = []
        for element in ("studio_icon", "record_button"):
            gui_click(s, element)
            sizes.append(len(s.action_log))
        assert sizes == sorted(sizes) and sizes[-1] == 2

    def test_bad_scenario_rejected(self):
        bad = dict(SCENARIO_DOC, initial_screen="nowhere")
        with pytest.raises(ValueError):
            VirtualGuiScenario.from_dict(bad)
        bad = json.loads(json.dumps(SCENARIO_DOC))
        bad["edges"].append({"screen": "home", "element": "ghost", "next": "desktop"})
        with pytest.raises(ValueError):
            VirtualGuiScenario.from_dict(bad)


class TestDeviceChannels:
    def test_stub_logs_and_acks(self):
        ch = StubDeviceChannel()
        cmd = DeviceCommand("cobot", "move_to_viewpoint", {"pose": 3}, "s1:1")
        result = send_device_command(ch, cmd)
        assert result.status is ExecutionStatus.OK
        assert ch.log == [cmd]

    def test_duplicate_correlation_rejected_before_send(self):
        ch = StubDeviceChannel()
        cmd = DeviceCommand("cobot", "move", {}, "s1:1")
        send_device_command(ch, cmd)
        with pytest.raises(DuplicateCorrelationId):
            send_device_command(ch, DeviceCommand("cobot", "other", {}, "s1:1"))
        assert len(ch.log) == 1

    def test_stub_forced_failure(self):
        ch = StubDeviceChannel(fail_commands={"explode"})
        result = send_device_command(ch, DeviceCommand("cobot", "explode", {}, "s1:9"))
        assert result.status is ExecutionStatus.FAILED

    @staticmethod
    def _loopback_server(responder):
        server = socket.create_server(("127.0.0.1", 0))

        def serve():
            conn, _ = server.accept()
            with conn, conn.makefile("rw", encoding="utf-8") as fh:
                for line in fh:
                    request = json.loads(line)
                    ack = responder(request)
                    if ack is None:
                        continue  # hold the connection open, never ack
                    fh.write(json.dumps(ack) + "\n")
                    fh.flush()

        thread = threading.Thread(target=serve, daemon=True)
        thread.start()
        return server

    def test_tcp_ok_and_error_acks(self):
        def responder(request):
            status = "error" if request["command"] == "bad" else "ok"
            return {"correlation_id": request["correlation_id"], "status": status, "detail": "d"}

        server = self._loopback_server(responder)
        ch = TcpDeviceChannel("127.0.0.1", server.getsockname()[1], timeout_ms=2000)
        ok = ch.send(DeviceCommand("cobot", "good", {}, "s1:1"))
        assert ok.status is ExecutionStatus.OK
        bad = ch.send(DeviceCommand("cobot", "bad", {}, "s1:2"))
        assert bad.status is ExecutionStatus.FAILED
        ch.close()
        server.close()

    def test_tcp_unreachable(self):
        from statebuddy.executors import ChannelUnavailable

        ch = TcpDeviceChannel("127.0.0.1", 1, timeout_ms=200)
        with pytest.raises(ChannelUnavailable):
            ch.send(DeviceCommand("cobot", "x", {}, "s1:1"))

    def test_tcp_missing_ack_times_out(self):
        from statebuddy.executors import DeviceTimeout

        server = self._loopback_server(lambda request: None)  # reads, never acks
        ch = TcpDeviceChannel("127.0.0.1", server.getsockname()[1], timeout_ms=150)
        with pytest.raises(DeviceTimeout):
            ch.send(DeviceCommand("cobot", "silent", {}, "s1:1"))
        server.close()

    def test_registry_maps_timeout_to_failed(self):
        server = self._loopback_server(lambda request: None)
        registry = default_registry()
        registry.bind(
            ActionKind.DEVICE,
            DeviceExecutor(TcpDeviceChannel("127.0.0.1", server.getsockname()[1], timeout_ms=150)),
        )
        result = registry.execute(ActionSpec(ActionKind.DEVICE, "silent"), ctx())
        assert result.status is ExecutionStatus.FAILED
        assert "silent" in result.feedback or "ack" in result.feedback
        server.close()

    def test_device_executor_builds_unique_correlations(self):
        ch = StubDeviceChannel()
        ex = DeviceExecutor(ch)
        action = ActionSpec(ActionKind.DEVICE, "move", {"device": "cobot", "speed": 2})
        ex.execute(action, ctx())
        ex.execute(action, ctx())
        assert [c.correlation_id for c in ch.log] == ["s1:1", "s1:2"]
        assert ch.log[0].device == "cobot"
        assert ch.log[0].params == {"speed": 2}


class TestScriptHttpWait:
    def test_script_return_values_map_to_statuses(self):
        ex = ScriptExecutor(
            {
                "plain": lambda p, c: None,
                "truthy": lambda p, c: True,
                "falsy": lambda p, c: False,
                "text": lambda p, c: "did it",
                "boom": lambda p, c: 1 / 0,
            }
        )
        run = lambda name: ex.execute(ActionSpec(ActionKind.SCRIPT, name), ctx())
        assert run("plain").status is ExecutionStatus.OK
        assert run("truthy").status is ExecutionStatus.CHECK_PASSED
        assert run("falsy").status is ExecutionStatus.CHECK_FAILED
        assert run("text").feedback == "did it"
        assert run("boom").status is ExecutionStatus.FAILED
        assert run("missing").status is ExecutionStatus.FAILED

    def test_wait_sleeps_through_context(self):
        waited = []
        c = ctx(sleeper=waited.append)
        result = WaitExecutor().execute(ActionSpec(ActionKind.WAIT, 50), c)
        assert result.status is ExecutionStatus.OK
        assert waited == [50.0]

    def test_wait_real_duration(self):
        registry = ExecutorRegistry().bind(ActionKind.WAIT, WaitExecutor())
        result = registry.execute(ActionSpec(ActionKind.WAIT, 50), ctx())
        assert result.status is ExecutionStatus.OK
        assert result.duration_ms >= 50

    def test_http_executor_posts_params(self):
        from http.server import BaseHTTPRequestHandler, HTTPServer

        received = {}

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                received.update(json.loads(self.rfile.read(int(self.headers["Content-Length"]))))
                self.send_response(200)
                self.send_header("Content-Length", "2")
                self.end_headers()
                self.wfile.write(b"ok")

            def log_message(self, *args):
                pass

        server = HTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            ex = HttpExecutor()
            url = f"http://127.0.0.1:{server.server_port}/hook"
            result = ex.execute(ActionSpec(ActionKind.HTTP, url, {"x": 1}), ctx())
            assert result.status is ExecutionStatus.OK
            assert received == {"x": 1}
            down = ex.execute(ActionSpec(ActionKind.HTTP, "http://127.0.0.1:1/", {}), ctx())
            assert down.status is ExecutionStatus.FAILED
        finally:
            server.shutdown()


class TestRegistry:
    def test_unbound_kind_fails_closed(self):
        registry = ExecutorRegistry()
        with pytest.raises(UnboundKind):
            registry.execute(ActionSpec(ActionKind.DEVICE, "move"), ctx())

    def test_none_kind_always_available(self):
        registry = ExecutorRegistry()
        assert registry.execute(ActionSpec(ActionKind.NONE), ctx()).status is ExecutionStatus.OK

    def test_dispatch_by_kind_with_duration(self):
        clock_values = iter([100, 170])
        c = ctx(clock=lambda: next(clock_values))
        registry = default_registry(scenarios={"studio": VirtualGuiScenario.from_dict(SCENARIO_DOC)})
        result = registry.execute(ActionSpec(ActionKind.GUI_CLICK, "studio_icon"), c)
        assert result.status is ExecutionStatus.OK
        assert result.duration_ms == 70

    def test_gui_executor_app_selection(self):
        other = {
            "app_id": "alt",
            "initial_screen": "only",
            "screens": {"only": {"elements": ["alt_button"], "visible_text": "alt"}},
            "edges": [],
        }
        gui = GuiExecutor(
            {
                "studio": VirtualGuiScenario.from_dict(SCENARIO_DOC),
                "alt": VirtualGuiScenario.from_dict(other),
            }
        )
        result = gui.execute(ActionSpec(ActionKind.GUI_CLICK, "alt_button", {"app": "alt"}), ctx())
        assert result.status is ExecutionStatus.OK
        default = gui.execute(ActionSpec(ActionKind.GUI_CLICK, "studio_icon"), ctx())
        assert default.status is ExecutionStatus.OK

    def test_channel_errors_become_failed_results(self):
        registry = default_registry()
        registry.bind(ActionKind.DEVICE, DeviceExecutor(TcpDeviceChannel("127.0.0.1", 1, timeout_ms=100)))
        result = registry.execute(ActionSpec(ActionKind.DEVICE, "move"), ctx())
        assert result.status is ExecutionStatus.FAILED

    def test_context_is_read_only(self):
        c = ctx()
        with pytest.raises(dataclasses.FrozenInstanceError):
            c.state_id = "other"
        assert not hasattr(c, "fire") and not hasattr(c, "session")
