"""Service configuration.

One UTF-8 JSON file; the STATEBUDDY_CONFIG environment variable overrides
the path given on the command line. Without a file, every value falls back
to the bundled demo suite.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import StatebuddyError
from .intent import Thresholds


class ConfigError(StatebuddyError):
    pass


def demo_dir() -> str:
    return os.path.join(os.path.dirname(__file__), "demo")


@dataclass
class ServiceConfig:
    workflow_dir: str
    helper_dir: str
    scenarios: list[str] = field(default_factory=list)
    thresholds: Thresholds = field(default_factory=Thresholds)
    provider: dict = field(default_factory=lambda: {"kind": "hash"})
    device: dict = field(default_factory=lambda: {"kind": "stub"})
    bind: str = "127.0.0.1:8718"
    cursor_speed: float = 0.0
    log_dir: str = "session-logs"
    max_call_depth: int = 16
    max_autopilot_steps: int = 1000
    console_dir: str | None = None

    @property
    def bind_host(self) -> str:
        return self.bind.rsplit(":", 1)[0]

    @property
    def bind_port(self) -> int:
        return int(self.bind.rsplit(":", 1)[1])


def default_config() -> ServiceConfig:
    root = demo_dir()
    return ServiceConfig(
        workflow_dir=os.path.join(root, "workflows"),
        helper_dir=os.path.join(root, "helper"),
        scenarios=[
            os.path.join(root, "scenarios", "studio.json"),
            os.path.join(root, "scenarios", "generator.json"),
        ],
    )


def load_config(path: str | None = None) -> ServiceConfig:
    """Load the config file; STATEBUDDY_CONFIG wins over ``path``; no file at
    all yields the demo defaults."""
    env_path = os.environ.get("STATEBUDDY_CONFIG")
    effective = env_path or path
    config = default_config()
    if effective is None:
        return config
    try:
        with open(effective, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {effective}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {effective}: {e}")
    base = os.path.dirname(os.path.abspath(effective))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    if "workflow_dir" in doc:
        config.workflow_dir = resolve(doc["workflow_dir"])
    if "helper_dir" in doc:
        config.helper_dir = resolve(doc["helper_dir"])
    if "scenarios" in doc:
        config.scenarios = [resolve(p) for p in doc["scenarios"]]
    if "thresholds" in doc:
        t = doc["thresholds"]
        try:
            config.thresholds = Thresholds(
                tau_lev=int(t.get("tau_lev", 2)),
                tau_jac=float(t.get("tau_jac", 0.3)),
                tau_cos=float(t.get("tau_cos", 0.5)),
                jaccard_granularity=t.get("jaccard_granularity", "char"),
            )
        except ValueError as e:
            raise ConfigError(f"config thresholds: {e}")
        if "provider" in t:
            config.provider = dict(t["provider"])
            if config.provider.get("kind") == "table" and "path" in config.provider:
                config.provider["path"] = resolve(config.provider["path"])
    for key in ("bind", "cursor_speed", "log_dir", "max_call_depth", "max_autopilot_steps", "device", "console_dir"):
        if key in doc:
            setattr(config, key, doc[key])
    config.cursor_speed = float(config.cursor_speed)
    if config.cursor_speed < 0:
        raise ConfigError("cursor_speed must be >= 0")
    config.log_dir = resolve(config.log_dir)
    if config.console_dir:
        config.console_dir = resolve(config.console_dir)
    return config
