import os

import pytest
from hypothesis import HealthCheck, settings

from fractaldim.config import SystemConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")

ACCEPTANCE_LINES = []


def config_path(name):
    return os.path.abspath(os.path.join(CONFIGS, name + ".json"))


@pytest.fixture
def load_config():
    return lambda name: SystemConfig.load(config_path(name))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
