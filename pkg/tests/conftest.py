import numpy as np
import pytest

from safepursuit import sim

# lines printed by the acceptance suite, collected for the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def preset_logs():
    return {name: sim.run(sim.preset(name)) for name in sim.PRESETS}


@pytest.fixture(scope="session")
def nominal_logs():
    return {name: sim.nominal_only_run(sim.preset(name), keep_context=False) for name in sim.PRESETS}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
