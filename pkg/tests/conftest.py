import numpy as np
import pytest

from rnndescent.dataset import VectorStore, synth_uniform

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def points_1d():
    """Build a 1-D store from scalar positions."""

    def make(*xs):
        return VectorStore(np.array(xs, dtype=np.float32).reshape(-1, 1))

    return make


@pytest.fixture(scope="session")
def small_store():
    return synth_uniform(300, 8, seed=11)
