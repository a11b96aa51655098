import random
from pathlib import Path

import pytest


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in report.nodeid and getattr(report, "when", "call") == "call":
                rows.append((report.nodeid.split("::")[-1], outcome))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, outcome in sorted(rows):
            mark = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"{mark}  {name}")

from companion_engine.backend import ScriptedBackend
from companion_engine.config import ModelConfig, load_companion_configs
from companion_engine.orchestrator import Engine, EngineSettings, LogicalClock

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = Path(__file__).parent / "golden" / "v1"

CONFIG_PATH = DATA_DIR / "companions.json"


@pytest.fixture
def configs():
    return load_companion_configs(CONFIG_PATH)


@pytest.fixture
def rng():
    return random.Random(42)


@pytest.fixture
def default_model():
    return ModelConfig(model_id="test-model", max_tokens=512, context_token_budget=8192)


def make_engine(configs, backend=None, seed=7, **kwargs):
    """Engine wired for deterministic tests: scripted backend, logical clock."""
    backend = backend or ScriptedBackend(default_reply="ok")
    settings = kwargs.pop(
        "settings",
        EngineSettings(default_model=ModelConfig(model_id="test-model")),
    )
    return Engine(
        configs,
        backend,
        seed=seed,
        clock=LogicalClock(),
        settings=settings,
        **kwargs,
    )


@pytest.fixture
def engine(configs):
    return make_engine(configs)
