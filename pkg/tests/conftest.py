import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles.py, gen.py

from statebuddy.cli import LogicalClock
from statebuddy.config import default_config
from statebuddy.engine import EngineConfig, Session
from statebuddy.runtime import Catalog, build_registry, load_scenario_templates

DEMO_TRANSCRIPTS = Path(default_config().workflow_dir).parent / "transcripts"


@pytest.fixture(scope="session")
def demo_config():
    return default_config()


@pytest.fixture(scope="session")
def demo_catalog(demo_config):
    catalog = Catalog.load(demo_config.workflow_dir)
    assert not catalog.diagnostics, catalog.diagnostics
    return catalog


@pytest.fixture(scope="session")
def demo_templates(demo_config):
    templates, diagnostics = load_scenario_templates(demo_config.scenarios)
    assert not diagnostics, diagnostics
    return templates


@pytest.fixture
def demo_session_factory(demo_catalog, demo_templates):
    """Deterministic demo sessions: logical clock, zero delays."""

    def factory(workflow_id: str, session_id: str = "test-session", **config_kwargs):
        config = EngineConfig(clock=LogicalClock(), sleeper=lambda ms: None, **config_kwargs)
        return Session.start(
            demo_catalog.workflows[workflow_id],
            catalog=demo_catalog.workflows,
            registry=build_registry(demo_templates),
            config=config,
            session_id=session_id,
        )

    return factory


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE {outcome}: {name}", flush=True)
