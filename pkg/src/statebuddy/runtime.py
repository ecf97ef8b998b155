"""Shared runtime wiring: catalog loading, scenario templates, registries.

Used by both the service and the CLI so an interactive terminal session and
a hosted API session run the identical engine setup.
"""

from __future__ import annotations

import json
import os
from typing import Callable, Mapping

from .executors import ExecutorRegistry, StubDeviceChannel, VirtualGuiScenario, default_registry
from .helper import HelperManifest, helper_doc_warnings
from .model import (
    ParseError,
    ValidationError,
    WorkflowDefinition,
    check_gui_targets,
    check_workflow_links,
    load_workflow_file,
)


class Catalog:
    """All loadable workflows from one directory, with load diagnostics.

    Invalid files are excluded and reported; workflows whose call_workflow
    targets cannot be loaded are excluded too (to a fixpoint), since they
    could never run.
    """

    def __init__(self, workflows: dict[str, WorkflowDefinition], diagnostics: list[str]):
        self.workflows = workflows
        self.diagnostics = diagnostics

    @classmethod
    def load(
        cls,
        workflow_dir: str,
        scenario_elements: set[str] | None = None,
        manifest: HelperManifest | None = None,
    ) -> "Catalog":
        workflows: dict[str, WorkflowDefinition] = {}
        diagnostics: list[str] = []
        if os.path.isdir(workflow_dir):
            for name in sorted(os.listdir(workflow_dir)):
                if not name.endswith(".json"):
                    continue
                path = os.path.join(workflow_dir, name)
                try:
                    w = load_workflow_file(path)
                except (ParseError, ValidationError) as e:
                    diagnostics.append(f"{name}: {e}")
                    continue
                if w.id in workflows:
                    diagnostics.append(f"{name}: duplicate workflow id {w.id!r}, file skipped")
                    continue
                workflows[w.id] = w
        else:
            diagnostics.append(f"workflow directory not found: {workflow_dir}")

        changed = True
        while changed:
            changed = False
            for wid, w in list(workflows.items()):
                violations = check_workflow_links(w, workflows.keys())
                if violations:
                    for v in violations:
                        diagnostics.append(f"{wid}: {v} (workflow excluded)")
                    del workflows[wid]
                    changed = True

        if scenario_elements is not None:
            for w in workflows.values():
                for v in check_gui_targets(w, scenario_elements):
                    diagnostics.append(str(v))
        if manifest is not None:
            for w in workflows.values():
                diagnostics.extend(helper_doc_warnings(w, manifest))
        return cls(workflows, diagnostics)


def workflow_graph(w: WorkflowDefinition) -> dict:
    """Renderable node/edge description mirroring the definition."""
    return {
        "id": w.id,
        "metadata": dict(w.metadata),
        "initial_state": w.initial_state,
        "terminal_states": sorted(w.terminal_states),
        "states": [
            {
                "id": s.id,
                "human_label": s.human_label,
                "helper_doc": s.helper_doc,
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
                "autopilot_default": t.autopilot_default,
            }
            for t in w.transitions
        ],
        "jump_states": [{"trigger": j.trigger, "description": j.description} for j in w.jump_states],
    }


def load_scenario_templates(paths) -> tuple[list[dict], list[str]]:
    """Read + validate scenario files; returns (templates, diagnostics)."""
    templates: list[dict] = []
    diagnostics: list[str] = []
    for path in paths:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
            VirtualGuiScenario.from_dict(doc)
            templates.append(doc)
        except Exception as e:
            diagnostics.append(f"scenario {os.path.basename(str(path))}: {e}")
    return templates, diagnostics


def scenario_elements(templates: list[dict]) -> set[str]:
    out: set[str] = set()
    for doc in templates:
        out |= VirtualGuiScenario.from_dict(doc).defined_elements()
    return out


def build_registry(
    templates: list[dict],
    device_channel=None,
    scripts_extra: Mapping[str, Callable] | None = None,
) -> ExecutorRegistry:
    """Fresh per-session executors: each session owns its scenario instances.

    Ships a small default script set; kill_all_studios resets every scenario
    to its initial screen (the demo's studio-reset jump).
    """
    scenarios = {doc["app_id"]: VirtualGuiScenario.from_dict(doc) for doc in templates}

    def kill_all_studios(params, ctx):
        for s in scenarios.values():
            s.reset()
        return f"reset {len(scenarios)} studio screens"

    scripts = {"kill_all_studios": kill_all_studios, "noop": lambda params, ctx: None}
    scripts.update(scripts_extra or {})
    return default_registry(
        scenarios=scenarios or None,
        device_channel=device_channel or StubDeviceChannel(),
        scripts=scripts,
    )
