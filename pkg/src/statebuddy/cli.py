"""Author-facing command line.

    statebuddy validate FILE...        check workflow files, collect all findings
    statebuddy run WORKFLOW            interactive text session (matcher or --direct)
    statebuddy replay WORKFLOW FILE    deterministic batch run of a transcript
    statebuddy export WORKFLOW         DOT diagram on stdout
    statebuddy serve                   start the HTTP/WebSocket service

Exit codes: 0 ok, 1 validation/assertion failure, 2 usage error, 3 runtime
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, load_config
from .engine import (
    ActionFailed,
    EngineConfig,
    EngineError,
    GuardFailed,
    InadmissibleTransition,
    Session,
    _real_clock,
    _real_sleeper,
)
from .events import EventLogWriter, log_path
from .intent import Utterance, make_provider, match_in_state
from .model import (
    ParseError,
    ValidationError,
    export_diagram,
    load_workflow_file,
)
from .runtime import Catalog, build_registry, load_scenario_templates


class LogicalClock:
    """Deterministic millisecond clock: 0, 1, 2, ... per call."""

    def __init__(self, start: int = 0):
        self._now = start

    def __call__(self) -> int:
        now = self._now
        self._now += 1
        return now


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="statebuddy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="validate workflow files")
    p_validate.add_argument("paths", nargs="+", help="workflow JSON files")
    p_validate.add_argument("--json", action="store_true", help="one JSON object per finding on stdout")
    p_validate.add_argument("--lenient", action="store_true", help="ignore unknown fields")

    for name, help_ in (("run", "interactive session"), ("replay", "batch transcript run")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("workflow", help="workflow id (in the configured directory) or a file path")
        if name == "replay":
            p.add_argument("transcript", help="one utterance per line; #expect: headers declare final states")
        p.add_argument("--config", help="service config file (STATEBUDDY_CONFIG overrides)")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--seed", type=int, default=None, help="fix session id and clock for determinism")
        p.add_argument("--zero-delay", action="store_true", help="no inter-action delays")
        p.add_argument("--log-dir", help="event log directory (default from config)")
        if name == "run":
            p.add_argument("--direct", action="store_true", help="treat input lines as exact triggers")

    p_export = sub.add_parser("export", help="emit a DOT diagram")
    p_export.add_argument("workflow", help="workflow id or file path")
    p_export.add_argument("--config", help="service config file")

    p_serve = sub.add_parser("serve", help="run the orchestrator service")
    p_serve.add_argument("--config", help="service config file (STATEBUDDY_CONFIG overrides)")
    return parser


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    ok = True
    for path in args.paths:
        findings: list[dict] = []
        try:
            load_workflow_file(path, lenient=args.lenient)
        except FileNotFoundError:
            findings.append({"file": path, "kind": "io", "message": "file not found"})
        except ParseError as e:
            findings.append(
                {"file": path, "kind": "parse", "message": str(e), "line": e.line, "column": e.column}
            )
        except ValidationError as e:
            for v in e.violations:
                findings.append(
                    {"file": path, "kind": "validation", "workflow": e.workflow_id, "path": v.path, "message": v.message}
                )
        if findings:
            ok = False
            for f in findings:
                if args.json:
                    print(json.dumps(f, ensure_ascii=False))
                else:
                    where = f.get("path", "")
                    print(f"{path}: {where + ': ' if where else ''}{f['message']}", file=sys.stderr)
        elif not args.json:
            print(f"{path}: ok", file=sys.stderr)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# session plumbing shared by run/replay
# ---------------------------------------------------------------------------

def _load_environment(args):
    config = load_config(getattr(args, "config", None))
    templates, diagnostics = load_scenario_templates(config.scenarios)
    for d in diagnostics:
        print(f"warning: {d}", file=sys.stderr)

    workflow_arg = args.workflow
    if os.path.isfile(workflow_arg):
        workflow = load_workflow_file(workflow_arg)
        catalog = Catalog.load(os.path.dirname(os.path.abspath(workflow_arg)))
        catalog.workflows.setdefault(workflow.id, workflow)
    else:
        catalog = Catalog.load(config.workflow_dir)
        if workflow_arg not in catalog.workflows:
            raise ConfigError(f"workflow {workflow_arg!r} not found in {config.workflow_dir}")
        workflow = catalog.workflows[workflow_arg]
    return config, templates, catalog, workflow


def _start_session(args, config, templates, catalog, workflow, *, deterministic: bool):
    seed = getattr(args, "seed", None)
    if deterministic or seed is not None:
        seed = seed or 0
        clock = LogicalClock()
        session_id = f"session-{seed:08d}"
    else:
        clock = None
        session_id = None
    zero_delay = getattr(args, "zero_delay", False) or deterministic
    engine_config = EngineConfig(
        max_call_depth=config.max_call_depth,
        max_autopilot_steps=config.max_autopilot_steps,
        cursor_speed=0.0 if zero_delay else config.cursor_speed,
        clock=clock or _real_clock,
        sleeper=(lambda ms: None) if zero_delay else _real_sleeper,
    )
    log_dir = getattr(args, "log_dir", None) or config.log_dir
    registry = build_registry(templates)
    session = Session.start(
        workflow,
        catalog=catalog.workflows,
        registry=registry,
        config=engine_config,
        session_id=session_id,
    )
    writer = EventLogWriter(log_path(log_dir, session.session_id))
    for event in session.events:
        writer.append(event)
    session.sink = writer
    return session, writer


def _print_state(session, as_json: bool) -> None:
    wf = session.active_workflow()
    state = session.active_state()
    commands = session.admissible()
    if as_json:
        print(json.dumps({"workflow": wf.id, "state": state, "admissible": commands}, ensure_ascii=False))
    else:
        print(f"[{wf.id}] state: {state}" + (" (terminal)" if session.at_terminal() else ""))
        print(f"commands: {', '.join(commands)}")


def _apply_utterance(session, line: str, thresholds, provider, direct: bool, as_json: bool) -> None:
    if direct:
        session.fire(line.strip(), origin="api")
        if not as_json:
            print(f"fired: {line.strip()}")
        return
    decision = match_in_state(Utterance.of(line), session, thresholds, provider)
    session.record_intent(decision, line)
    if as_json:
        print(json.dumps({"decision": decision.to_dict()}, ensure_ascii=False))
    if decision.matched:
        if not as_json:
            print(f"matched: {decision.trigger} (branch {decision.branch})")
        session.fire(decision.trigger, origin="intent")
    else:
        if not as_json:
            print("rejected: no confident match")
            for i, r in enumerate(decision.ranking, start=1):
                s = r.scores
                print(f"  {i}. {r.trigger}  d_lev={s.d_lev} d_jac={s.d_jac:.3f} s_cos={s.s_cos:.3f}")


# ---------------------------------------------------------------------------
# run / replay
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    config, templates, catalog, workflow = _load_environment(args)
    thresholds = config.thresholds
    provider = make_provider(config.provider)
    session, writer = _start_session(args, config, templates, catalog, workflow, deterministic=False)
    try:
        while True:
            _print_state(session, args.json)
            try:
                line = input("> ")
            except EOFError:
                break
            if not line.strip():
                continue
            try:
                _apply_utterance(session, line, thresholds, provider, args.direct, args.json)
            except (InadmissibleTransition, GuardFailed, ActionFailed) as e:
                print(f"error: {e}", file=sys.stderr)
            if session.state.autopilot_enabled and not session.at_terminal():
                try:
                    run = session.run_autopilot()
                    if not args.json:
                        print(f"autopilot: {run.halt} after {run.steps} steps")
                except EngineError as e:
                    print(f"autopilot error: {e}", file=sys.stderr)
        session.end(reason="eof")
    finally:
        writer.close()
    if not args.json:
        print(f"event log: {writer.path}")
    return 0


def parse_transcript(text: str) -> tuple[list[str], list[str]]:
    """Returns (utterances, expected final states). Lines starting with
    '#expect:' declare acceptable final states; other '#' lines are comments."""
    utterances: list[str] = []
    expected: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#expect:"):
            expected.extend(s.strip() for s in stripped[len("#expect:"):].split(",") if s.strip())
        elif stripped.startswith("#"):
            continue
        else:
            utterances.append(stripped)
    return utterances, expected


def cmd_replay(args) -> int:
    config, templates, catalog, workflow = _load_environment(args)
    thresholds = config.thresholds
    provider = make_provider(config.provider)
    with open(args.transcript, "r", encoding="utf-8") as fh:
        utterances, expected = parse_transcript(fh.read())
    session, writer = _start_session(args, config, templates, catalog, workflow, deterministic=True)
    rejected = 0
    errors = 0
    try:
        for line in utterances:
            decision = match_in_state(Utterance.of(line), session, thresholds, provider)
            session.record_intent(decision, line)
            if not decision.matched:
                rejected += 1
                continue
            try:
                session.fire(decision.trigger, origin="intent")
            except (InadmissibleTransition, GuardFailed, ActionFailed) as e:
                errors += 1
                print(f"error on {line!r}: {e}", file=sys.stderr)
        session.end(reason="replay_complete")
    finally:
        writer.close()
    final = session.active_state()
    ok = not expected or final in expected
    summary = {
        "final_state": final,
        "expected": expected,
        "utterances": len(utterances),
        "rejected": rejected,
        "errors": errors,
        "event_log": writer.path,
        "ok": ok,
    }
    if args.json:
        print(json.dumps(summary, ensure_ascii=False))
    else:
        print(f"final state: {final}" + (f" (expected one of: {', '.join(expected)})" if expected else ""))
        print(f"utterances: {len(utterances)}, rejected: {rejected}, errors: {errors}")
        print(f"event log: {writer.path}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# export / serve
# ---------------------------------------------------------------------------

def cmd_export(args) -> int:
    if os.path.isfile(args.workflow):
        workflow = load_workflow_file(args.workflow)
    else:
        config = load_config(args.config)
        catalog = Catalog.load(config.workflow_dir)
        if args.workflow not in catalog.workflows:
            raise ConfigError(f"workflow {args.workflow!r} not found in {config.workflow_dir}")
        workflow = catalog.workflows[args.workflow]
    sys.stdout.write(export_diagram(workflow))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    app = create_app(config)
    try:
        uvicorn.run(app, host=config.bind_host, port=config.bind_port, log_level="warning")
    except (OSError, ValueError) as e:
        print(f"serve failed: {e}", file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "export":
            return cmd_export(args)
        if args.command == "serve":
            return cmd_serve(args)
        return 2
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ParseError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
