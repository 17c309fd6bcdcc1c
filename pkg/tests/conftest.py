import numpy as np
import pytest

from qtrust.data import two_moons_split
from qtrust.seeding import derive
from qtrust.vqc import TrainConfig, train_fresh


@pytest.fixture(scope="session")
def moons():
    """Default 900/600 two-moons split for seed 0."""
    return two_moons_split(rng=derive(0, "data"))


@pytest.fixture(scope="session")
def trained(moons):
    train, _ = moons
    return train_fresh(train, TrainConfig(seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
