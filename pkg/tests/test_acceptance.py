"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
(see conftest.pytest_runtest_logreport). Tolerances and budgets are pinned
in the assertions."""

import json
import random
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from conftest import DEMO_TRANSCRIPTS
from gen import load_bundle, random_bundle
from oracles import (
    oracle_decide,
    oracle_jaccard_distance,
    oracle_jaccard_similarity,
    oracle_levenshtein,
    oracle_reachable,
)
from statebuddy.cli import LogicalClock, main
from statebuddy.config import load_config
from statebuddy.engine import (
    ActionFailed,
    AutopilotStepLimit,
    CallDepthExceeded,
    EngineConfig,
    GuardFailed,
    InadmissibleTransition,
    Session,
)
from statebuddy.events import EventType, check_sequence, read_event_log, replay_snapshot
from statebuddy.executors import ExecutorRegistry, ScriptExecutor, WaitExecutor
from statebuddy.intent import (
    HashEmbeddingProvider,
    Thresholds,
    TransitionCandidate,
    Utterance,
    cosine_similarity,
    decide,
    jaccard_distance,
    levenshtein,
    match_in_state,
)
from statebuddy.model import ActionKind

TRIGGER_POOL = [
    "NextState", "BackState", "OpenStudio", "ConfigurePreview", "StartPreview", "StopPreview",
    "MoveToViewpoint", "StartScan", "FinishScan", "AcceptScan", "RefineRegion", "RepeatScan",
    "OpenTools", "MergeScans", "RegisterScans", "FuseMesh", "ExportMesh",
    "LoadMesh", "AlignMesh", "CloseMesh", "ComputeDeviation", "ClusterRegions",
    "GenerateProgram", "SaveProgram", "KillAllStudios", "RecalibrateScanner",
    "AutoPilotOn", "AutoPilotOff", "Help", "NextSlide", "PreviousSlide", "Ok", "Skip", "Detail",
    "ScanRegion", "CloseGaps", "RepeatRegion", "StateNext",
]
WORDS = [
    "next", "state", "back", "open", "studio", "scan", "mesh", "fuse", "align", "load",
    "go", "stop", "please", "the", "flux", "machine", "part", "run", "region", "now",
    "slide", "ok", "skip", "detail", "help",
]


def random_utterance(rng, candidates):
    mode = rng.random()
    base = rng.choice(candidates).match_text
    if mode < 0.25:
        return base
    if mode < 0.5:
        chars = list(base)
        for _ in range(rng.randint(1, 3)):
            i = rng.randrange(len(chars))
            op = rng.random()
            if op < 0.4:
                chars[i] = rng.choice("abcdefghijklmnopqrstuvwxyz ")
            elif op < 0.7:
                chars.insert(i, rng.choice("abcdefghij"))
            elif len(chars) > 1:
                del chars[i]
        return "".join(chars)
    if mode < 0.7:
        tokens = base.split() + [rng.choice(WORDS)]
        rng.shuffle(tokens)
        return " ".join(tokens[: rng.randint(1, len(tokens))])
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 6)))


def test_eq1_oracle_equivalence_10k_cases():
    """Independent brute-force joint rule agrees with decide() on 10,000
    randomized cases, 100% agreement, under 5 seconds."""
    rng = random.Random(20_240_817)
    provider = HashEmbeddingProvider()
    th = Thresholds()
    pool = [TransitionCandidate.of(t) for t in TRIGGER_POOL]
    cases = []
    for _ in range(10_000):
        cands = rng.sample(pool, rng.randint(1, 6))
        cases.append((Utterance.of(random_utterance(rng, cands)), cands))

    started = time.perf_counter()
    agree = 0
    for q, cands in cases:
        got = decide(q, cands, th, provider)
        vectors = {c.match_text: provider.embed(c.match_text).components for c in cands}
        expected = oracle_decide(
            q.normalized,
            [c.match_text for c in cands],
            th.tau_lev, th.tau_jac, th.tau_cos,
            vectors, provider.embed(q.normalized).components,
        )
        if expected[0] == "matched":
            ok = got.matched and got.trigger == cands[expected[1]].trigger and got.branch == expected[2]
        else:
            ok = not got.matched
        agree += ok
    elapsed = time.perf_counter() - started
    assert agree == 10_000, f"only {agree}/10000 cases agree with the oracle"
    assert elapsed < 5.0, f"took {elapsed:.2f}s (budget 5s)"


def test_metric_correctness():
    """levenshtein == DP oracle on 10,000 random pairs; jaccard in [0,1]
    with D = 1 - S on 10,000 pairs; cosine self-similarity and scale
    invariance to 1e-9 on 1,000 random vectors."""
    rng = random.Random(99)
    alphabet = "abcdefghij "
    for _ in range(10_000):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        assert levenshtein(a, b) == oracle_levenshtein(a, b)

    for _ in range(10_000):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        d = jaccard_distance(a, b)
        assert 0.0 <= d <= 1.0
        assert abs(d - (1.0 - oracle_jaccard_similarity(a, b))) < 1e-12
        assert abs(d - oracle_jaccard_distance(a, b)) < 1e-12

    for _ in range(1_000):
        v = tuple(rng.uniform(-1, 1) for _ in range(64)) or (1.0,)
        if all(c == 0.0 for c in v):
            continue
        assert abs(cosine_similarity(v, v) - 1.0) <= 1e-9
        alpha = rng.uniform(0.01, 100.0)
        assert abs(cosine_similarity(v, tuple(alpha * c for c in v)) - 1.0) <= 1e-9


def test_default_thresholds_match_deployment_values():
    """A freshly loaded default config carries tau_cos=0.5, tau_lev=2,
    tau_jac=0.3."""
    config = load_config(None)
    assert config.thresholds.tau_cos == 0.5
    assert config.thresholds.tau_lev == 2
    assert config.thresholds.tau_jac == 0.3
    assert Thresholds() == Thresholds(tau_lev=2, tau_jac=0.3, tau_cos=0.5)


def test_state_constrained_matching_in_ready(demo_session_factory):
    """From Ready only NextState/BackState plus jump/global commands are
    matchable; a trigger admissible only elsewhere is never matched."""
    session = demo_session_factory("components")
    assert session.active_state() == "Ready"
    entries = session.admissible_entries()
    transitions = [t for t, k in entries if k == "transition"]
    assert transitions == ["NextState", "BackState"]
    jumps_globals = {t for t, k in entries if k in ("jump", "global")}
    assert {t for t, _ in entries} == set(transitions) | jumps_globals

    d = match_in_state(Utterance.of("next state"), session)
    assert d.matched and d.trigger == "NextState"
    d = match_in_state(Utterance.of("back state"), session)
    assert d.matched and d.trigger == "BackState"

    # FuseMesh exists only in the 3D Processing workflow; its exact spoken
    # form must never map to it from Ready
    foreign = ("FuseMesh", "fuse mesh")
    assert foreign[0] not in {t for t, _ in entries}
    d = match_in_state(Utterance.of(foreign[1]), session)
    assert d.trigger != foreign[0]
    ranked = {r.trigger for r in d.ranking}
    assert foreign[0] not in ranked


def _suite_registry():
    return (
        ExecutorRegistry()
        .bind(ActionKind.SCRIPT, ScriptExecutor({"noop": lambda p, c: None}))
        .bind(ActionKind.WAIT, WaitExecutor())
    )


def test_fsm_invariant_suite_1000_workflows():
    """1,000 random workflows x random command sequences: admissibility
    safety, jump round-trip, nested-call bracket balance, autopilot
    termination. Zero violations, under 60 seconds."""
    rng = random.Random(7_301)
    started = time.perf_counter()
    for round_ in range(1_000):
        docs = random_bundle(rng)
        bundle = load_bundle(docs)
        reachable = {wid: oracle_reachable(doc) for wid, doc in docs.items()}
        config = EngineConfig(clock=LogicalClock(), sleeper=lambda ms: None,
                              max_call_depth=6, max_autopilot_steps=50)
        session = Session.start(bundle["w0"], catalog=bundle, registry=_suite_registry(),
                                config=config, session_id=f"acc-{round_}")
        for _ in range(12):
            if rng.random() < 0.2:
                before = session.snapshot()
                with pytest.raises(InadmissibleTransition):
                    session.fire("EldritchTrigger")
                assert session.snapshot() == before
                continue
            trigger = rng.choice(session.admissible())
            wf = session.active_workflow()
            state_before = session.active_state()
            is_jump = wf.jump(trigger) is not None
            try:
                session.fire(trigger)
            except (CallDepthExceeded, ActionFailed, GuardFailed, InadmissibleTransition):
                continue
            if is_jump:
                assert session.active_state() == state_before, "jump must round-trip"
                assert session.active_workflow().id == wf.id
            for frame in session.state.stack:
                assert frame.state_id in reachable[frame.workflow_id], "unreachable state entered"
        if rng.random() < 0.5:
            session.set_autopilot(True)
            try:
                run = session.run_autopilot()
                assert run.steps <= 50
            except (AutopilotStepLimit, CallDepthExceeded, ActionFailed, GuardFailed):
                pass
        depth = 0
        for e in session.events:
            if e.type is EventType.WORKFLOW_CALLED:
                depth += 1
            elif e.type is EventType.WORKFLOW_RETURNED:
                depth -= 1
            assert depth >= 0, "unbalanced workflow_returned"
        assert depth == len(session.state.stack) - 1, "stack depth != nesting level"
        check_sequence(session.events)
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"took {elapsed:.1f}s (budget 60s)"


def test_end_to_end_replay_impeller_chain(tmp_path, capsys):
    """The committed transcript drives the Preview -> Full Scan ->
    3D Processing -> Part Program Generator chain to its terminal state,
    with byte-identical event logs across two runs."""
    transcript = DEMO_TRANSCRIPTS / "impeller_chain.txt"
    logs = []
    for name in ("one", "two"):
        code = main(["replay", "components", str(transcript), "--log-dir", str(tmp_path / name), "--json"])
        summary = json.loads(capsys.readouterr().out)
        assert code == 0
        assert summary["final_state"] == "Done"
        assert summary["rejected"] == 0 and summary["errors"] == 0
        logs.append(Path(summary["event_log"]).read_bytes())
    assert logs[0] == logs[1], "event logs differ between identical runs"

    events = read_event_log(tmp_path / "one" / "session-00000000.events.jsonl")
    called = [e.payload["workflow"] for e in events if e.type is EventType.WORKFLOW_CALLED]
    assert called == ["preview", "full_scan", "scan_slicing", "processing_3d", "part_program_generator"]


def test_event_sourcing_durability(tmp_path):
    """Restart + log replay reconstructs session snapshots exactly for a
    set of fixture sessions covering nesting, jumps, autopilot and
    rejections."""
    from statebuddy.config import default_config
    from statebuddy.service import create_app

    config = default_config()
    config.log_dir = str(tmp_path / "logs")
    ids = iter([f"fix-{i}" for i in range(10)])
    app = create_app(config, clock=LogicalClock(), session_id_factory=lambda: next(ids))
    client = TestClient(app)  # no lifespan: the process "disappears" uncleanly

    fixtures = {
        "components": ["next state", "open studio", "kill all studios", "nonsense gibberish zz"],
        "preview": ["autopilot on"],
        "full_scan": ["move to viewpoint", "start scan"],
    }
    snaps = {}
    for workflow_id, commands in fixtures.items():
        sid = client.post("/sessions", json={"workflow_id": workflow_id}).json()["session"]["session_id"]
        for c in commands:
            client.post(f"/sessions/{sid}/utterance", json={"utterance": c})
        snaps[sid] = app.state.orchestrator.get(sid).session.snapshot()
    assert len(snaps) == 3

    app2 = create_app(config, clock=LogicalClock(start=10**7))
    with TestClient(app2):
        for sid, snap in snaps.items():
            handle = app2.state.orchestrator.get(sid)
            assert handle is not None, f"session {sid} not restored"
            assert handle.session.snapshot() == snap, f"snapshot drift for {sid}"
            # and pure log replay, without the service, reconstructs the same
            events = read_event_log(handle.record.log_path)
            assert replay_snapshot(events) == snap
