import numpy as np
import pytest

from extensor import BundleSpec, load


@pytest.fixture(scope="session")
def polar():
    return load("polar")


@pytest.fixture(scope="session")
def sphere():
    return load("sphere")


@pytest.fixture(scope="session")
def em():
    return load("em")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def spec_q2():
    """n = 2 with one vector and one (0,2) argument."""
    return BundleSpec(2, ((1, 0), (0, 2)))


def random_tensor(rng, n, valence):
    r, s = valence
    return rng.uniform(-1, 1, (n,) * (r + s))


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
