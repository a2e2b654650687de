from __future__ import annotations

import numpy as np
import pytest

from fluctlab.scenario import ScenarioConfig


def small_config(**changes) -> ScenarioConfig:
    """A cheap d=1 scenario for unit tests."""
    base = ScenarioConfig(
        d=1, N_list=(50, 100, 200), T=0.1, n_steps=10, L=8.0, M=128, cutoff=32.0, freq_size=128,
        replicas=4, seed=7)
    return base.replace(**changes) if changes else base


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
