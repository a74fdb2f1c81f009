import pytest

from aovsim.config import SimulationConfig, with_overrides

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def small_cfg():
    """A fast scenario: 4 vehicles, 30 slots."""
    return with_overrides(SimulationConfig(), {
        "clock.horizon": 30,
        "vehicles.count": 4,
        "agents.warmup": 16,
        "agents.batch_size": 8,
        "training.eval_every": 2,
        "training.eval_episodes": 1,
    })


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
